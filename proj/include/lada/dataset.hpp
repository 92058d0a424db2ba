#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lada/tensor.hpp"

namespace lada::dataset {

enum class SetLabel { Train, Val, Test };

const char* to_string(SetLabel s);

struct SplitAssignment {
    std::vector<std::size_t> train, val, test;
    std::vector<std::size_t> observation_timesteps;  // sorted, deduplicated
    std::size_t total = 0;
    std::size_t jump = 1;

    SetLabel label_of(std::size_t t) const;
};

// Deterministic chronological split. Observation timesteps go to the test set
// first; the remaining indices are scanned in order, repeating: two consecutive
// indices to train, then `jump` indices that alternate val, test, val, ...
// (the alternation state persists across the whole scan and starts at val).
// Rejected unless every set ends up non-empty.
SplitAssignment split(std::size_t total, std::size_t jump,
                      std::vector<std::size_t> observation_timesteps);

// One supervised sample for the surrogate: `inputs` are q consecutive vectors,
// `target` the vector that follows them; `target_index` its position in the
// source series.
struct SequenceSample {
    std::vector<std::vector<double>> inputs;
    std::vector<double> target;
    std::size_t target_index = 0;
};

// Sliding lookback windows over a series of length L: exactly L - q samples,
// sample i reads positions [i, i+q) and targets position i+q. Needs L >= q+1.
std::vector<SequenceSample> window(const std::vector<std::vector<double>>& series,
                                   std::size_t q);

// Lookback windows confined to one split set. `member_indices` (strictly
// ascending positions into `series`) are walked in order and cut into
// segments wherever two neighbours lie more than `max_gap` timesteps apart;
// each segment is windowed like `window`. Inputs and target therefore all
// come from the same set, and no sample spans a hole wider than `max_gap`.
// `target_index` is the target's position in the original series.
std::vector<SequenceSample> windows_within(
    const std::vector<std::vector<double>>& series,
    const std::vector<std::size_t>& member_indices, std::size_t q,
    std::size_t max_gap);

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> holdout;
};

// Shuffled k-fold partition; fold sizes differ by at most one (the first
// `n % k` folds get the extra element). Deterministic in `seed`.
std::vector<Fold> kfold(const std::vector<std::size_t>& indices, std::size_t k,
                        std::uint64_t seed);

// CSV with header "timestep,set"; one row per timestep in ascending order.
void write_split_csv(const std::string& path, const SplitAssignment& split);
SplitAssignment read_split_csv(const std::string& path);

}  // namespace lada::dataset
