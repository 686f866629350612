#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "cmtra/corpus.hpp"
#include "support/fixtures.hpp"

using namespace cmtra;

TEST(Labels, SixMembersInCanonicalOrder) {
  ASSERT_EQ(kAllLabels.size(), 6u);
  const std::vector<std::string> codes{"NO", "OL", "OTI", "OTG", "OTO", "OU"};
  for (std::size_t i = 0; i < kAllLabels.size(); ++i) {
    EXPECT_EQ(short_code(kAllLabels[i]), codes[i]);
    EXPECT_EQ(index_of(kAllLabels[i]), i);
  }
}

TEST(Labels, CanonicalStringRoundTrip) {
  for (auto lang : kAllLanguages) {
    for (auto l : label_set(lang)) EXPECT_EQ(parse_label(canonical_string(l, lang)), l);
  }
}

TEST(Labels, MalayalamExcludesOto) {
  EXPECT_EQ(label_set(Language::Malayalam).size(), 5u);
  EXPECT_FALSE(permits(Language::Malayalam, OffenseLabel::TargetedOther));
  EXPECT_EQ(label_set(Language::Kannada).size(), 6u);
  EXPECT_EQ(label_set(Language::Tamil).size(), 6u);
}

TEST(Labels, DistributedOtherLanguageSpellings) {
  EXPECT_EQ(parse_label("not-Kannada"), OffenseLabel::OtherLanguage);
  EXPECT_EQ(parse_label("not-malayalam"), OffenseLabel::OtherLanguage);
  EXPECT_EQ(parse_label("not-Tamil"), OffenseLabel::OtherLanguage);
  EXPECT_THROW(parse_label("Offensive"), LabelParseError);
}

TEST(ParseRecord, SplitsOnTab) {
  const auto c = parse_tsv_record("Ok movie\tNot_offensive", Language::Kannada, true);
  EXPECT_EQ(c.text, "Ok movie");
  EXPECT_EQ(c.label, OffenseLabel::NotOffensive);
  EXPECT_EQ(c.origin, Origin::CodeMixed);
}

TEST(ParseRecord, UnlabeledModeIgnoresLabelField) {
  const auto c = parse_tsv_record("trailer super\t", Language::Tamil, false);
  EXPECT_EQ(c.text, "trailer super");
  EXPECT_FALSE(c.label.has_value());
}

TEST(ParseRecord, LastTabSeparatesLabel) {
  const auto c = parse_tsv_record("a\tb\tOffensive_Untargetede", Language::Tamil, true);
  EXPECT_EQ(c.text, "a\tb");
  EXPECT_EQ(c.label, OffenseLabel::Untargeted);
}

TEST(ParseRecord, Errors) {
  EXPECT_THROW(parse_tsv_record("text\tNonsense", Language::Tamil, true), LabelParseError);
  EXPECT_THROW(parse_tsv_record("text\tOffensive_Targeted_Insult_Other", Language::Malayalam, true), LabelSetError);
  EXPECT_THROW(parse_tsv_record("   \tNot_offensive", Language::Tamil, true), EmptyTextError);
  EXPECT_THROW(parse_tsv_record("no tab here", Language::Tamil, true), LabelParseError);
}

TEST(ParseRecord, TaggedRoundTripWithAndWithoutLabel) {
  LabeledComment c{"ಸೂಪರ್ ಪದಮ್", OffenseLabel::TargetedGroup, Language::Kannada, Origin::Transliterated};
  EXPECT_EQ(parse_tagged_record(serialize_tagged_record(c), Language::Kannada), c);
  c.label.reset();
  EXPECT_EQ(parse_tagged_record(serialize_tagged_record(c), Language::Kannada), c);
  c.text = "has\ttab";
  c.label = OffenseLabel::NotOffensive;
  EXPECT_EQ(parse_tagged_record(serialize_tagged_record(c), Language::Kannada), c);
}

TEST(LoadSplit, RowsInFileOrderWithHeaderAndBlanks) {
  std::istringstream in("text\tlabel\nfirst\tNot_offensive\n\nsecond\tnot-Tamil\nthird\tOffensive_Untargetede\n");
  std::vector<std::string> warnings;
  const auto ds = read_dataset(in, Language::Tamil, Split::Train, true, RecordFormat::Plain,
                               [&](std::string_view m) { warnings.emplace_back(m); });
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds[0].text, "first");
  EXPECT_EQ(ds[1].label, OffenseLabel::OtherLanguage);
  EXPECT_EQ(ds[2].text, "third");
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(LoadSplit, RecordErrorsCarryLineNumbers) {
  std::istringstream in("ok\tNot_offensive\nbad\tWhatever\n");
  try {
    read_dataset(in, Language::Tamil, Split::Train, true);
    FAIL() << "expected a record error";
  } catch (const RecordError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadSplit, MissingFileIsIoError) {
  EXPECT_THROW(load_split("/nonexistent/file.tsv", Language::Tamil, Split::Train, true), IoError);
}

TEST(LoadSplit, StripsByteOrderMark) {
  std::istringstream in("\xEF\xBB\xBFtext\tlabel\nx\tNot_offensive\n");
  const auto ds = read_dataset(in, Language::Tamil, Split::Train, true);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].text, "x");
}

TEST(ClassDistribution, AllOneClass) {
  Dataset ds(Language::Kannada, Split::Train);
  for (int i = 0; i < 5; ++i) ds.add({"x", OffenseLabel::NotOffensive, Language::Kannada, Origin::CodeMixed});
  const auto counts = class_distribution(ds);
  EXPECT_EQ(counts[index_of(OffenseLabel::NotOffensive)], 5u);
  for (auto l : kAllLabels)
    if (l != OffenseLabel::NotOffensive) {
      EXPECT_EQ(counts[index_of(l)], 0u);
    }
}

TEST(ClassDistribution, MatchesIndependentTally) {
  const auto ds = fx::toy_corpus(Language::Tamil, 50, 3);
  std::map<std::string, std::size_t> tally;
  for (std::size_t i = 0; i < ds.size(); ++i) ++tally[std::string(short_code(*ds.samples()[i].label))];
  const auto counts = class_distribution(ds);
  std::size_t sum = 0;
  for (auto l : kAllLabels) {
    EXPECT_EQ(counts[index_of(l)], tally[std::string(short_code(l))]);
    sum += counts[index_of(l)];
  }
  EXPECT_EQ(sum, ds.size());
}

TEST(ClassDistribution, UnlabeledSampleRejected) {
  Dataset ds(Language::Tamil, Split::Train);
  ds.add({"x", std::nullopt, Language::Tamil, Origin::CodeMixed});
  EXPECT_THROW(class_distribution(ds), UnlabeledSampleError);
}

TEST(Dataset, RejectsForeignLanguage) {
  Dataset ds(Language::Tamil, Split::Train);
  EXPECT_THROW(ds.add({"x", OffenseLabel::NotOffensive, Language::Kannada, Origin::CodeMixed}), LanguageMismatchError);
}

TEST(ValidateLabels, FlagsOtoInMalayalam) {
  Dataset ds(Language::Malayalam, Split::Train);
  ds.add({"x", OffenseLabel::NotOffensive, Language::Malayalam, Origin::CodeMixed});
  ds.add({"y", OffenseLabel::TargetedOther, Language::Malayalam, Origin::CodeMixed});
  const auto r = validate_labels(ds);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].index, 1u);
}

TEST(Merge, ConcatenatesInOrder) {
  const auto a = fx::toy_corpus(Language::Tamil, 7, 1);
  const auto b = fx::toy_corpus(Language::Tamil, 4, 2);
  const auto m = merge_datasets(a, b);
  ASSERT_EQ(m.size(), 11u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(m[i], a[i]);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(m[7 + i], b[i]);
  EXPECT_THROW(merge_datasets(a, fx::toy_corpus(Language::Kannada, 2, 1)), LanguageMismatchError);
}

TEST(Merge, Associative) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = fx::toy_corpus(Language::Kannada, 1 + seed % 5, seed);
    const auto b = fx::toy_corpus(Language::Kannada, 3, seed + 100);
    const auto c = fx::toy_corpus(Language::Kannada, seed % 3, seed + 200);
    EXPECT_EQ(merge_datasets(merge_datasets(a, b), c).samples(), merge_datasets(a, merge_datasets(b, c)).samples());
  }
}

TEST(RoundTrip, WriteThenReadReproducesDataset) {
  for (auto lang : kAllLanguages) {
    const auto ds = fx::toy_corpus(lang, 30, 9);
    std::ostringstream out;
    write_dataset(out, ds);
    std::istringstream in(out.str());
    EXPECT_EQ(read_dataset(in, lang, Split::Train, true).samples(), ds.samples());
  }
}

TEST(PublishedSizes, KannadaTestDiscrepancySurfaced) {
  // Reconstructed from the class-wise table: 768 rows.
  Dataset ds(Language::Kannada, Split::Test);
  const std::size_t counts[] = {417, 185, 75, 44, 14, 33};
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < counts[i]; ++k) ds.add({"x", kAllLabels[i], Language::Kannada, Origin::CodeMixed});
  const auto msgs = published_discrepancies(ds);
  ASSERT_FALSE(msgs.empty());
  bool mentions = false;
  for (const auto& m : msgs) mentions = mentions || (m.find("778") != std::string::npos);
  EXPECT_TRUE(mentions);
}

TEST(PublishedSizes, ToySplitGetsSingleSizeWarning) {
  const auto ds = fx::toy_corpus(Language::Tamil, 20, 1);
  EXPECT_EQ(published_discrepancies(ds).size(), 1u);
  EXPECT_TRUE(published_discrepancies(fx::toy_corpus(Language::Tamil, 5, 1, Split::Unsplit)).empty());
}
