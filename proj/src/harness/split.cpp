#include <random>
#include <set>

#include "faceqa/harness.hpp"
#include "json.hpp"

namespace faceqa {

using nlohmann::json;

namespace {
constexpr std::size_t kFolds = 5;
}

SplitSizes fold_sizes(std::size_t n, std::size_t fold) {
  if (fold >= kFolds) throw ContractError("fold index " + std::to_string(fold) + " out of range");
  SplitSizes s;
  s.test = n / kFolds + (fold < n % kFolds ? 1 : 0);
  s.val = n / 10;
  s.train = n - s.test - s.val;
  return s;
}

SplitPlan split_folds(const std::vector<std::string>& image_ids, std::uint64_t seed) {
  const std::size_t n = image_ids.size();
  if (n < 10) throw SplitSizeError("five-fold 7:1:2 split needs at least 10 images, got " + std::to_string(n));
  if (std::set<std::string>(image_ids.begin(), image_ids.end()).size() != n) {
    throw DataError("image ids passed to split_folds are not unique");
  }
  std::vector<std::string> order = image_ids;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);

  SplitPlan plan;
  plan.seed = seed;
  std::size_t start = 0;
  for (std::size_t f = 0; f < kFolds; ++f) {
    const SplitSizes sz = fold_sizes(n, f);
    std::vector<char> used(n, 0);
    FoldAssignment a;
    for (std::size_t i = 0; i < sz.test; ++i) {
      a.test.push_back(order[start + i]);
      used[start + i] = 1;
    }
    for (std::size_t i = 0; i < sz.val; ++i) {
      const std::size_t k = (start + sz.test + i) % n;
      a.val.push_back(order[k]);
      used[k] = 1;
    }
    for (std::size_t k = 0; k < n; ++k)
      if (!used[k]) a.train.push_back(order[k]);
    plan.folds.push_back(std::move(a));
    start += sz.test;
  }
  return plan;
}

std::string split_to_json(const SplitPlan& plan) {
  json j;
  j["seed"] = plan.seed;
  j["ratios"] = {0.7, 0.1, 0.2};
  j["folds"] = json::array();
  for (const auto& f : plan.folds) j["folds"].push_back({{"train", f.train}, {"val", f.val}, {"test", f.test}});
  return j.dump(1);
}

SplitPlan split_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    SplitPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& f : j.at("folds")) {
      plan.folds.push_back({f.at("train").get<std::vector<std::string>>(), f.at("val").get<std::vector<std::string>>(),
                            f.at("test").get<std::vector<std::string>>()});
    }
    return plan;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad split plan: ") + e.what());
  }
}

}  // namespace faceqa
