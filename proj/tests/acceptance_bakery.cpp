// Bakery sequential benchmark. Reads the receipts file from
// TCNET_BAKERY_RECEIPTS (goods names from TCNET_BAKERY_GOODS) or the default
// path under data/bakery/, and exits with kSkip when it is absent.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

#include "tcnet/data.hpp"
#include "tcnet/model.hpp"
#include "tcnet/training.hpp"

namespace {

constexpr int kSkip = 77;
constexpr double kCeCeiling = 3.1;
constexpr double kBudgetSeconds = 30 * 60;
constexpr std::uint64_t kSeed = 0;

std::optional<std::filesystem::path> env_path(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::filesystem::path(v);
}

}  // namespace

int main() {
  using namespace tcnet;
  const auto receipts =
      env_path("TCNET_BAKERY_RECEIPTS").value_or(TCNET_BAKERY_DEFAULT_RECEIPTS);
  auto goods = env_path("TCNET_BAKERY_GOODS");
  if (!goods && std::filesystem::exists(TCNET_BAKERY_DEFAULT_GOODS))
    goods = std::filesystem::path(TCNET_BAKERY_DEFAULT_GOODS);
  if (!std::filesystem::exists(receipts)) {
    std::printf("criterion 6: SKIP no Bakery receipts at %s (set TCNET_BAKERY_RECEIPTS)\n",
                receipts.c_str());
    return kSkip;
  }
  try {
    const auto start = std::chrono::steady_clock::now();
    const auto ds = import_bakery(receipts, goods);
    const auto splits = split(ds, {}, kSeed);

    TrainConfig tc;
    tc.epochs = 50;
    tc.seed = kSeed;
    tc.objective = Objective::kChoice;

    TCNetConfig base;
    base.input_dim = training_input_dim(ds, tc);
    GridSpec grid;
    grid.hidden_dims = {32, 64};
    grid.heads = {4};
    grid.learning_rates = {1e-3};
    auto tcnet = grid_search(base, grid, splits, tc);

    tc.learning_rate = 1e-3;
    auto mnl = train(LinearMnl(base.input_dim, kSeed), splits, tc);

    const auto test = prepare_eval_data(splits.test, tc, kSeed + 2);
    const double tcnet_ce = dataset_loss(*tcnet.model, test, tc.objective);
    const double mnl_ce = dataset_loss(*mnl.model, test, tc.objective);
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start).count();
    const bool ok = tcnet_ce <= kCeCeiling && tcnet_ce < mnl_ce && secs <= kBudgetSeconds;
    std::printf(
        "criterion 6: %s TCNet test CE %.4f (d_v=%zu) vs linear MNL %.4f over "
        "%zu test samples, %.0f s\n",
        ok ? "PASS" : "FAIL", tcnet_ce, tcnet.best_config.hidden_dim, mnl_ce,
        test.size(), secs);
    return ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::printf("criterion 6: FAIL error: %s\n", e.what());
    return 1;
  }
}
