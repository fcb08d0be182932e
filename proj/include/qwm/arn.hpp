#pragma once

// Adaptive Reward Normalization: per-morphology EMA of the 5th-95th
// percentile reward range; rewards are divided by max(1, sigma).

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "qwm/common.hpp"
#include "json.hpp"

namespace qwm::arn {

struct UnknownId : Error {
  using Error::Error;
};

// numpy-style linear interpolation percentile over a sorted copy
inline double percentile(std::vector<double> xs, double p) {
  if (xs.empty()) throw Error("percentile of empty sample");
  std::sort(xs.begin(), xs.end());
  if (xs.size() == 1) return xs[0];
  double rank = p / 100.0 * (xs.size() - 1);
  std::size_t lo = static_cast<std::size_t>(rank);
  if (lo >= xs.size() - 1) return xs.back();
  double frac = rank - lo;
  return xs[lo] + frac * (xs[lo + 1] - xs[lo]);
}

class RewardNormalizer {
 public:
  explicit RewardNormalizer(double alpha = 0.99, std::size_t buffer_capacity = 4096)
      : alpha_(alpha), capacity_(buffer_capacity) {}

  void register_id(int morphology_id) { states_.try_emplace(morphology_id); }

  bool has_id(int morphology_id) const { return states_.count(morphology_id) > 0; }

  // appends the batch to the id's ring buffer, then applies one EMA update
  // sigma <- alpha*sigma + (1-alpha)*(P95 - P05) over the current buffer
  void observe(int morphology_id, const std::vector<double>& rewards) {
    auto& st = states_[morphology_id];
    for (double r : rewards) {
      if (st.buffer.size() < capacity_) {
        st.buffer.push_back(r);
      } else {
        st.buffer[st.write_pos] = r;
      }
      st.write_pos = (st.write_pos + 1) % capacity_;
    }
    if (st.buffer.empty()) return;
    double range = percentile(st.buffer, 95.0) - percentile(st.buffer, 5.0);
    st.sigma = alpha_ * st.sigma + (1.0 - alpha_) * range;
  }

  double sigma(int morphology_id) const {
    auto it = states_.find(morphology_id);
    if (it == states_.end())
      throw UnknownId("morphology id " + std::to_string(morphology_id) + " not registered");
    return it->second.sigma;
  }

  // divisor is always >= 1, so normalization never amplifies
  double normalize_reward(int morphology_id, double r) const {
    return r / std::max(1.0, sigma(morphology_id));
  }

  std::string dump_json() const {
    nlohmann::json j;
    for (const auto& [id, st] : states_) {
      j[std::to_string(id)] = {{"sigma", st.sigma}, {"buffer_len", st.buffer.size()}};
    }
    return j.dump();
  }

  // restores sigmas (buffers restart empty; only sigma and length are dumped)
  void restore_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    states_.clear();
    for (auto it = j.begin(); it != j.end(); ++it) {
      State st;
      st.sigma = it.value()["sigma"].get<double>();
      states_[std::stoi(it.key())] = std::move(st);
    }
  }

  double alpha() const { return alpha_; }

 private:
  struct State {
    double sigma = 1.0;
    std::vector<double> buffer;
    std::size_t write_pos = 0;
  };
  double alpha_;
  std::size_t capacity_;
  std::map<int, State> states_;
};

}  // namespace qwm::arn
