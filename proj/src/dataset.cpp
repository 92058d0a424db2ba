#include "lada/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "lada/rng.hpp"

namespace lada::dataset {

const char* to_string(SetLabel s) {
    switch (s) {
        case SetLabel::Train: return "train";
        case SetLabel::Val: return "val";
        case SetLabel::Test: return "test";
    }
    return "?";
}

SetLabel SplitAssignment::label_of(std::size_t t) const {
    if (std::binary_search(train.begin(), train.end(), t)) return SetLabel::Train;
    if (std::binary_search(val.begin(), val.end(), t)) return SetLabel::Val;
    if (std::binary_search(test.begin(), test.end(), t)) return SetLabel::Test;
    throw ConfigError("timestep " + std::to_string(t) + " is not in the split");
}

SplitAssignment split(std::size_t total, std::size_t jump,
                      std::vector<std::size_t> observation_timesteps) {
    require(total >= 4, "split needs at least 4 timesteps");
    require(jump >= 1, "jump must be at least 1");
    std::sort(observation_timesteps.begin(), observation_timesteps.end());
    observation_timesteps.erase(
        std::unique(observation_timesteps.begin(), observation_timesteps.end()),
        observation_timesteps.end());
    for (std::size_t t : observation_timesteps)
        require(t < total, "observation timestep " + std::to_string(t) + " out of range");

    SplitAssignment out;
    out.total = total;
    out.jump = jump;
    out.observation_timesteps = observation_timesteps;
    out.test = observation_timesteps;

    // Pattern over the remaining indices: 2 to train, then `jump` alternating
    // val/test. `phase` counts within the (2 + jump)-cycle, `next_val` is the
    // persistent alternation toggle.
    std::size_t phase = 0;
    bool next_val = true;
    const std::size_t cycle = 2 + jump;
    for (std::size_t t = 0; t < total; ++t) {
        if (std::binary_search(observation_timesteps.begin(), observation_timesteps.end(),
                               t))
            continue;
        if (phase < 2) {
            out.train.push_back(t);
        } else {
            (next_val ? out.val : out.test).push_back(t);
            next_val = !next_val;
        }
        phase = (phase + 1) % cycle;
    }
    std::sort(out.test.begin(), out.test.end());
    require(!out.train.empty() && !out.val.empty() && !out.test.empty(),
            "split produced an empty set; series too short for this jump");
    return out;
}

std::vector<SequenceSample> window(const std::vector<std::vector<double>>& series,
                                   std::size_t q) {
    require(q >= 1, "lookback must be at least 1");
    require(series.size() >= q + 1,
            "series of length " + std::to_string(series.size()) +
                " too short for lookback " + std::to_string(q));
    for (const auto& v : series)
        require(v.size() == series.front().size(), "series vectors differ in length");
    std::vector<SequenceSample> samples;
    samples.reserve(series.size() - q);
    for (std::size_t i = 0; i + q < series.size(); ++i) {
        SequenceSample s;
        s.inputs.assign(series.begin() + static_cast<std::ptrdiff_t>(i),
                        series.begin() + static_cast<std::ptrdiff_t>(i + q));
        s.target = series[i + q];
        s.target_index = i + q;
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<SequenceSample> windows_within(
    const std::vector<std::vector<double>>& series,
    const std::vector<std::size_t>& member_indices, std::size_t q,
    std::size_t max_gap) {
    require(q >= 1, "lookback must be at least 1");
    require(max_gap >= 1, "max_gap must be at least 1");
    for (std::size_t i = 0; i < member_indices.size(); ++i) {
        require(member_indices[i] < series.size(),
                "member index " + std::to_string(member_indices[i]) +
                    " beyond the series");
        if (i)
            require(member_indices[i - 1] < member_indices[i],
                    "member indices must be strictly ascending");
    }

    std::vector<SequenceSample> samples;
    std::size_t seg_begin = 0;
    for (std::size_t i = 0; i <= member_indices.size(); ++i) {
        bool cut = i == member_indices.size() ||
                   (i > seg_begin && member_indices[i] - member_indices[i - 1] > max_gap);
        if (!cut) continue;
        // Window the segment [seg_begin, i) of member positions.
        if (i - seg_begin >= q + 1) {
            for (std::size_t s0 = seg_begin; s0 + q < i; ++s0) {
                SequenceSample s;
                s.inputs.reserve(q);
                for (std::size_t j = s0; j < s0 + q; ++j)
                    s.inputs.push_back(series[member_indices[j]]);
                s.target = series[member_indices[s0 + q]];
                s.target_index = member_indices[s0 + q];
                samples.push_back(std::move(s));
            }
        }
        seg_begin = i;
    }
    return samples;
}

std::vector<Fold> kfold(const std::vector<std::size_t>& indices, std::size_t k,
                        std::uint64_t seed) {
    require(k >= 2, "k-fold needs k >= 2");
    require(indices.size() >= k, "k-fold needs at least k indices");
    std::vector<std::size_t> shuffled = indices;
    Rng rng(seed);
    rng.shuffle(shuffled);

    std::vector<Fold> folds(k);
    std::size_t base = shuffled.size() / k, extra = shuffled.size() % k;
    std::size_t off = 0;
    for (std::size_t f = 0; f < k; ++f) {
        std::size_t size = base + (f < extra ? 1 : 0);
        folds[f].holdout.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(off),
                                shuffled.begin() + static_cast<std::ptrdiff_t>(off + size));
        for (std::size_t i = 0; i < shuffled.size(); ++i)
            if (i < off || i >= off + size) folds[f].train.push_back(shuffled[i]);
        off += size;
    }
    return folds;
}

void write_split_csv(const std::string& path, const SplitAssignment& split) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open '" + path + "' for writing");
    os << "timestep,set\n";
    for (std::size_t t = 0; t < split.total; ++t)
        os << t << ',' << to_string(split.label_of(t)) << '\n';
    if (!os) throw ConfigError("write failed for '" + path + "'");
}

SplitAssignment read_split_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open split file '" + path + "'");
    std::string line;
    if (!std::getline(is, line) || line != "timestep,set")
        throw ConfigError("split file '" + path + "' has an unexpected header");
    SplitAssignment out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t comma = line.find(',');
        require(comma != std::string::npos, "malformed split row: " + line);
        std::size_t t = static_cast<std::size_t>(std::stoull(line.substr(0, comma)));
        std::string label = line.substr(comma + 1);
        if (label == "train")
            out.train.push_back(t);
        else if (label == "val")
            out.val.push_back(t);
        else if (label == "test")
            out.test.push_back(t);
        else
            throw ConfigError("unknown set label '" + label + "' in split file");
        out.total = std::max(out.total, t + 1);
    }
    require(out.total > 0, "split file is empty");
    return out;
}

}  // namespace lada::dataset
