#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "lada/dataset.hpp"
#include "lada/tensor.hpp"

using namespace lada;
using namespace lada::dataset;

using Idx = std::vector<std::size_t>;

namespace {

std::vector<std::vector<double>> ramp_series(std::size_t len, std::size_t dim) {
    std::vector<std::vector<double>> s(len, std::vector<double>(dim));
    for (std::size_t i = 0; i < len; ++i)
        for (std::size_t d = 0; d < dim; ++d)
            s[i][d] = static_cast<double>(i) + 0.1 * static_cast<double>(d);
    return s;
}

}  // namespace

TEST_CASE("split walks 2 train then alternating val/test jumped indices") {
    // T=9, jump=1: scan 0,1 train; 2 val; 3,4 train; 5 test; 6,7 train; 8 val.
    SplitAssignment s = split(9, 1, {});
    CHECK(s.train == Idx({0, 1, 3, 4, 6, 7}));
    CHECK(s.val == Idx({2, 8}));
    CHECK(s.test == Idx({5}));

    CHECK(s.label_of(0) == SetLabel::Train);
    CHECK(s.label_of(2) == SetLabel::Val);
    CHECK(s.label_of(5) == SetLabel::Test);
    CHECK(s.label_of(8) == SetLabel::Val);
}

TEST_CASE("reserving an observation timestep reroutes the scan around it") {
    // 5 is reserved for test up front; the remaining scan is 0,1 train; 2 val;
    // 3,4 train; 6 test; 7,8 train.
    SplitAssignment s = split(9, 1, {5});
    CHECK(s.train == Idx({0, 1, 3, 4, 7, 8}));
    CHECK(s.val == Idx({2}));
    CHECK(s.test == Idx({5, 6}));
}

TEST_CASE("split covers every timestep exactly once") {
    for (std::size_t jump : {1, 2, 3}) {
        SplitAssignment s = split(100, jump, {10, 20, 30});
        std::vector<bool> seen(100, false);
        for (auto set : {&s.train, &s.val, &s.test})
            for (std::size_t t : *set) {
                REQUIRE(t < 100);
                CHECK(!seen[t]);
                seen[t] = true;
            }
        CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
        for (std::size_t o : {10, 20, 30})
            CHECK(s.label_of(o) == SetLabel::Test);
    }
}

TEST_CASE("observation timesteps land in test regardless of scan position") {
    // 5 would otherwise be a train index (pattern restarts around it).
    SplitAssignment s = split(30, 2, {0, 1, 29});
    for (std::size_t o : {0, 1, 29}) CHECK(s.label_of(o) == SetLabel::Test);
    // Scan ignores reserved indices entirely: first two non-reserved are train.
    CHECK(s.label_of(2) == SetLabel::Train);
    CHECK(s.label_of(3) == SetLabel::Train);
    CHECK(s.label_of(4) == SetLabel::Val);
    CHECK(s.label_of(5) == SetLabel::Test);
}

TEST_CASE("split rejects degenerate requests") {
    CHECK_THROWS_AS(split(0, 1, {}), ConfigError);
    CHECK_THROWS_AS(split(9, 0, {}), ConfigError);
    CHECK_THROWS_AS(split(9, 1, {9}), ConfigError);   // out of range
    CHECK_THROWS_AS(split(2, 1, {}), ConfigError);    // some set empty
    CHECK_THROWS_AS(split(3, 1, {0, 1, 2}), ConfigError);  // everything reserved
}

TEST_CASE("duplicate observation timesteps are deduplicated") {
    SplitAssignment s = split(12, 1, {4, 4, 7});
    CHECK(s.observation_timesteps == Idx({4, 7}));
    CHECK(s.test.size() >= 2);
}

TEST_CASE("window enumerates exactly L-q lookback samples") {
    auto series = ramp_series(5, 2);
    std::vector<SequenceSample> w = window(series, 3);
    REQUIRE(w.size() == 2);  // 5 - 3

    CHECK(w[0].inputs.size() == 3);
    CHECK(w[0].inputs[0] == series[0]);
    CHECK(w[0].inputs[1] == series[1]);
    CHECK(w[0].inputs[2] == series[2]);
    CHECK(w[0].target == series[3]);
    CHECK(w[0].target_index == 3);

    CHECK(w[1].inputs[0] == series[1]);
    CHECK(w[1].target == series[4]);
    CHECK(w[1].target_index == 4);

    CHECK_THROWS_AS(window(ramp_series(3, 2), 3), ConfigError);  // L == q
    CHECK_THROWS_AS(window(series, 0), ConfigError);
}

TEST_CASE("windows_within stays inside the member set and its segments") {
    auto series = ramp_series(12, 1);

    // Members {0,1,3,4,6,7} with gaps <= 2: one segment, three q=2 windows,
    // every input drawn from the member list itself.
    std::vector<SequenceSample> w = windows_within(series, {0, 1, 3, 4, 6, 7}, 2, 2);
    REQUIRE(w.size() == 4);
    CHECK(w[0].inputs[0] == series[0]);
    CHECK(w[0].inputs[1] == series[1]);
    CHECK(w[0].target == series[3]);
    CHECK(w[0].target_index == 3);
    CHECK(w[3].inputs[0] == series[4]);
    CHECK(w[3].inputs[1] == series[6]);
    CHECK(w[3].target == series[7]);
    CHECK(w[3].target_index == 7);

    // A hole wider than max_gap splits the list into two segments.
    std::vector<SequenceSample> s = windows_within(series, {0, 1, 2, 8, 9, 10, 11}, 2, 3);
    REQUIRE(s.size() == 3);
    CHECK(s[0].target_index == 2);   // from segment {0,1,2}
    CHECK(s[1].target_index == 10);  // from segment {8,9,10,11}
    CHECK(s[2].target_index == 11);
    CHECK(s[1].inputs[0] == series[8]);

    // Segments shorter than q+1 produce nothing.
    CHECK(windows_within(series, {0, 5, 10}, 2, 2).empty());
    CHECK(windows_within(series, {}, 2, 2).empty());

    CHECK_THROWS_AS(windows_within(series, {3, 1}, 2, 2), ConfigError);
    CHECK_THROWS_AS(windows_within(series, {0, 99}, 2, 2), ConfigError);
    CHECK_THROWS_AS(windows_within(series, {0, 1, 2}, 0, 2), ConfigError);
    CHECK_THROWS_AS(windows_within(series, {0, 1, 2}, 2, 0), ConfigError);
}

TEST_CASE("kfold partitions are disjoint, covering and seed-deterministic") {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < 23; ++i) idx.push_back(i * 3);

    std::vector<Fold> folds = kfold(idx, 5, 77);
    REQUIRE(folds.size() == 5);

    // 23 = 5*4 + 3: first three folds hold 5 elements, the rest 4.
    CHECK(folds[0].holdout.size() == 5);
    CHECK(folds[1].holdout.size() == 5);
    CHECK(folds[2].holdout.size() == 5);
    CHECK(folds[3].holdout.size() == 4);
    CHECK(folds[4].holdout.size() == 4);

    std::multiset<std::size_t> all;
    for (const Fold& f : folds) {
        CHECK(f.train.size() + f.holdout.size() == idx.size());
        std::set<std::size_t> train(f.train.begin(), f.train.end());
        for (std::size_t h : f.holdout) CHECK(train.count(h) == 0);
        all.insert(f.holdout.begin(), f.holdout.end());
    }
    CHECK(all == std::multiset<std::size_t>(idx.begin(), idx.end()));

    std::vector<Fold> again = kfold(idx, 5, 77);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(again[i].holdout == folds[i].holdout);
        CHECK(again[i].train == folds[i].train);
    }
    std::vector<Fold> other = kfold(idx, 5, 78);
    bool any_differ = false;
    for (std::size_t i = 0; i < 5; ++i)
        if (other[i].holdout != folds[i].holdout) any_differ = true;
    CHECK(any_differ);
}

TEST_CASE("kfold splits 5 elements into folds of 3 and 2 when k=2") {
    std::vector<Fold> folds = kfold({1, 2, 3, 4, 5}, 2, 1);
    REQUIRE(folds.size() == 2);
    CHECK(folds[0].holdout.size() == 3);
    CHECK(folds[1].holdout.size() == 2);
    CHECK_THROWS_AS(kfold({1, 2}, 3, 1), ConfigError);  // k > n
    CHECK_THROWS_AS(kfold({1, 2}, 1, 1), ConfigError);  // k < 2
}

TEST_CASE("split CSV round-trips through write and read") {
    SplitAssignment s = split(40, 2, {6, 18, 33});
    const std::string path = "/tmp/lada_test_split.csv";
    write_split_csv(path, s);
    SplitAssignment back = read_split_csv(path);
    CHECK(back.train == s.train);
    CHECK(back.val == s.val);
    CHECK(back.test == s.test);
    CHECK(back.total == s.total);
    std::remove(path.c_str());
}

TEST_CASE("set labels print their names") {
    CHECK(std::string(to_string(SetLabel::Train)) == "train");
    CHECK(std::string(to_string(SetLabel::Val)) == "val");
    CHECK(std::string(to_string(SetLabel::Test)) == "test");
}
