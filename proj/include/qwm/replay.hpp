#pragma once

// Per-morphology episode replay with equal-id window sampling.

#include <deque>
#include <map>
#include <vector>

#include "qwm/common.hpp"
#include "qwm/env.hpp"

namespace qwm::replay {

struct Transition {
  std::vector<double> obs;  // o_t
  std::vector<double> act;  // action that led to o_t (zeros at episode start)
  double reward_raw = 0;    // reward received with o_t
  double cont = 1;          // 0 iff o_t is terminal (falls, not truncations)
  bool is_first = false;
};

struct Episode {
  int morph_id = 0;
  std::vector<Transition> steps;
};

// sampled training batch, raw values; spec fields (o, a, r_raw, r_norm, c, id, mu)
struct EpisodeBatch {
  int batch = 0, steps = 0;
  std::vector<std::vector<Transition>> rows;  // batch x steps
  std::vector<std::vector<double>> r_norm;    // batch x steps
  std::vector<int> morph_ids;                 // batch
  std::vector<std::array<double, morphfeat::kFeatures>> mu;  // batch
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(long long capacity_per_id = 20000) : capacity_(capacity_per_id) {}

  void add_episode(Episode ep) {
    auto& buf = buffers_[ep.morph_id];
    buf.total += static_cast<long long>(ep.steps.size());
    buf.episodes.push_back(std::move(ep));
    while (buf.total > capacity_ && buf.episodes.size() > 1) {
      buf.total -= static_cast<long long>(buf.episodes.front().steps.size());
      buf.episodes.pop_front();
    }
  }

  long long transitions(int morph_id) const {
    auto it = buffers_.find(morph_id);
    return it == buffers_.end() ? 0 : it->second.total;
  }

  std::vector<int> ids() const {
    std::vector<int> out;
    for (const auto& [id, b] : buffers_) out.push_back(id);
    return out;
  }

  // window of seq_len transitions from one episode of the given id; episodes
  // shorter than seq_len are padded with absorbing copies of their last step
  // (zero reward, repeated observation)
  std::vector<Transition> sample_window(int morph_id, int seq_len, Rng& rng) const {
    auto it = buffers_.find(morph_id);
    if (it == buffers_.end() || it->second.episodes.empty())
      throw Error("replay: no episodes for morphology " + std::to_string(morph_id));
    const auto& eps = it->second.episodes;
    const Episode& ep = eps[rng.uniform_int(eps.size())];
    int len = static_cast<int>(ep.steps.size());
    int max_start = std::max(0, len - seq_len);
    int start = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_start) + 1));
    std::vector<Transition> out;
    out.reserve(seq_len);
    for (int t = 0; t < seq_len; ++t) {
      int idx = start + t;
      if (idx < len) {
        out.push_back(ep.steps[idx]);
      } else {
        Transition pad = ep.steps[len - 1];
        pad.reward_raw = 0;
        pad.is_first = false;
        out.push_back(std::move(pad));
      }
    }
    return out;
  }

 private:
  struct IdBuffer {
    std::deque<Episode> episodes;
    long long total = 0;
  };
  long long capacity_;
  std::map<int, IdBuffer> buffers_;
};

}  // namespace qwm::replay
