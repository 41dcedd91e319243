#include <doctest.h>

#include <cmath>

#include "genret/metrics.hpp"
#include "support.hpp"
#include "oracles.hpp"

using namespace genret;

namespace {

ScoredInstance scored(std::vector<std::string> cands, std::vector<std::size_t> pos, std::vector<double> scores) {
  ScoredInstance s;
  s.instance.image_id = "i";
  s.instance.anchor = "cat";
  s.instance.candidates = std::move(cands);
  s.instance.positives = std::move(pos);
  s.scores = std::move(scores);
  s.template_name = "{A}";
  return s;
}

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || std::abs(a - b) <= 1e-9; }

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("average precision hand cases") {
  CHECK(average_precision({true, false, true}) == 5.0 / 6.0);
  CHECK(average_precision({true, true, false}) == 1.0);
  CHECK(average_precision({false, true}) == 0.5);
  CHECK(average_precision({false, false}) == 0.0);
}

TEST_CASE("balanced accuracy hand case") {
  // one class with TP 1, FN 1, TN 2, FP 0
  std::vector<ScoredInstance> xs{scored({"red", "x1"}, {0}, {0, 0}), scored({"red", "x2"}, {0}, {0, 0}),
                                 scored({"red", "x3"}, {1}, {0, 0}), scored({"red", "x4"}, {1}, {0, 0})};
  std::vector<std::vector<double>> probs{{0.9, 0.9}, {0.1, 0.9}, {0.1, 0.9}, {0.2, 0.9}};
  // each x* class has a single label side and drops out
  CHECK(mean_balanced_accuracy(xs, probs, 0.5) == 0.75);
  probs[0][0] = 0.5;  // threshold is inclusive
  CHECK(mean_balanced_accuracy(xs, probs, 0.5) == 0.75);
}

TEST_CASE("f1 hand case") {
  // top-2 of each instance: one hit among four predictions, four positives
  std::vector<ScoredInstance> xs{scored({"a", "b", "c", "d"}, {0, 3}, {0, 1, 2, 3}),
                                 scored({"a", "b", "c", "d"}, {2, 3}, {0, 1, 2, 3})};
  // P = 1/4, R = 1/4
  CHECK(overall_f1_at_k(xs, 2) == doctest::Approx(0.25));
  std::vector<ScoredInstance> zs{scored({"a", "b", "c", "d", "e", "f"}, {0, 2, 3, 4}, {0, 1, 2, 3, 4, 5})};
  // P = 1/2, R = 1/4
  CHECK(overall_f1_at_k(zs, 2) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("mean rank and recall on a small case") {
  std::vector<ScoredInstance> xs{scored({"a", "b", "c"}, {1}, {0.1, 0.2, 0.3}),
                                 scored({"a", "b", "c"}, {0, 2}, {0.5, 0.5, 0.1})};
  // ranks: 2; then a=2 (tie with b, lower index), c=1
  CHECK(mean_rank(xs) == doctest::Approx(5.0 / 3.0));
  // classes: b 0/1 at k=1, a 0/1, c 1/1
  CHECK(mean_recall_at_k(xs, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(mean_recall_at_k(xs, 3) == 1.0);
  CHECK(kind_of([] { mean_rank({}); }) == ErrorKind::Metric);
  CHECK(kind_of([&] { mean_recall_at_k(xs, 0); }) == ErrorKind::Parameter);
}

TEST_CASE("classes without negatives are skipped in mAP") {
  std::vector<ScoredInstance> xs{scored({"a", "b"}, {1}, {0.1, 0.2}), scored({"a", "c"}, {0}, {0.5, 0.1})};
  auto ap = mean_average_precision(xs);
  CHECK(ap.classes == 1);
  CHECK(ap.value == 0.5);
  CHECK(ap.skipped == std::vector<std::string>{"b"});
}

TEST_CASE("metrics agree with brute force on random fixtures") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    CAPTURE(seed);
    std::vector<std::vector<double>> probs;
    auto xs = oracle::random_fixture(seed, &probs);
    CHECK(same(mean_rank(xs), oracle::mean_rank(xs)));
    for (std::size_t k : {1, 3, 15}) {
      CHECK(same(mean_recall_at_k(xs, k), oracle::mean_recall(xs, k)));
      CHECK(same(overall_f1_at_k(xs, k), oracle::f1_at_k(xs, k)));
    }
    for (bool neg : {true, false}) {
      auto lib = [&](MapPooling pool) {
        try {
          return mean_average_precision(xs, LabelOptions{neg}, pool).value;
        } catch (const Error& e) {
          REQUIRE(e.kind() == ErrorKind::Metric);
          return std::nan("");
        }
      };
      CHECK(same(lib(MapPooling::PerClass), oracle::map_per_class(xs, neg)));
      CHECK(same(lib(MapPooling::PerInstance), oracle::map_per_instance(xs, neg)));
      for (double t : {0.25, 0.5}) {
        double v;
        try {
          v = mean_balanced_accuracy(xs, probs, t, LabelOptions{neg});
        } catch (const Error& e) {
          REQUIRE(e.kind() == ErrorKind::Metric);
          v = std::nan("");
        }
        CHECK(same(v, oracle::balanced_accuracy(xs, probs, t, neg)));
      }
    }
  }
}

TEST_CASE("ranking metrics ignore monotone transforms of the scores") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto xs = oracle::random_fixture(1000 + seed);
    auto ys = xs;
    for (auto& s : ys)
      for (auto& v : s.scores) v = std::exp(v) * 3 - 1;
    CHECK(mean_rank(xs) == mean_rank(ys));
    CHECK(mean_recall_at_k(xs, 3) == mean_recall_at_k(ys, 3));
    CHECK(overall_f1_at_k(xs, 3) == overall_f1_at_k(ys, 3));
  }
}

TEST_CASE("buckets") {
  BucketCuts cuts;
  CHECK(bucket_of(5000, cuts) == FrequencyBucket::Head);
  CHECK(bucket_of(4999, cuts) == FrequencyBucket::Medium);
  CHECK(bucket_of(500, cuts) == FrequencyBucket::Medium);
  CHECK(bucket_of(499, cuts) == FrequencyBucket::Tail);
  CHECK(kind_of([] { bucketize({}, BucketCuts{10, 10}); }) == ErrorKind::Parameter);
  CHECK(kind_of([] { bucketize({}, BucketCuts{10, 0}); }) == ErrorKind::Parameter);
  auto meta = bucketize({{"red", 6000}, {"teal", 3}}, cuts);
  CHECK(meta.at("red").bucket == FrequencyBucket::Head);
  CHECK(meta.at("teal").bucket == FrequencyBucket::Tail);
}

TEST_CASE("report groups and round trip") {
  std::vector<ScoredInstance> xs{scored({"red", "teal", "blue"}, {0}, {0.1, 0.2, 0.3}),
                                 scored({"red", "teal", "blue"}, {1}, {0.1, 0.2, 0.3})};
  auto meta = bucketize({{"red", 6000}, {"teal", 3}, {"blue", 700}}, BucketCuts{});
  meta["red"].type = AttributeType::Color;
  ReportConfig rc;
  rc.ks = {1, 2};
  std::vector<std::vector<double>> probs{{0.9, 0.1, 0.1}, {0.9, 0.1, 0.1}};
  auto r = evaluate(xs, meta, rc, &probs);
  CHECK(r.mean_rank == 1.5);
  CHECK(r.per_bucket.at("head").recall_at_k.at(1) == 1.0);
  CHECK(r.per_bucket.at("tail").recall_at_k.at(1) == 0.0);
  CHECK(r.per_type.count("color") == 1);
  CHECK(r.balanced_accuracy.count(0.005) == 1);
  auto back = MetricReport::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  CHECK(r.to_text().find("mean rank") != std::string::npos);

  auto no_probs = evaluate(xs, meta, rc);
  CHECK(no_probs.balanced_accuracy.empty());
}

TEST_CASE("method by template table") {
  MetricReport gen, con, cal;
  gen.method = "generative";
  gen.template_name = "{O} is {A}";
  gen.mean_rank = 3.25;
  con.method = "contrastive";
  con.template_name = "{A}";
  con.mean_rank = 9.5;
  cal = gen;
  cal.calibrated = true;
  cal.mean_rank = 2.0;
  auto j = method_template_table_json({gen, con, cal});
  auto text = method_template_table({gen, con, cal});
  CHECK(text.find("Gen+cal") != std::string::npos);
  CHECK(text.find("3.2") != std::string::npos);
  CHECK(j.dump().find("9.5") != std::string::npos);
}

}
