#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flow/neuralnet.hpp"
#include "flow/random.hpp"
#include "flow/simcore.hpp"

namespace flow::agent {

/// Invalid configuration value; key() names the offending setting.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct TrainConfig {
  int episodes = 50;
  int batch_size = 200;
  int buffer_capacity = 4500;
  double gamma = 0.5;
  int green_duration = 4;   // s per agent decision
  int yellow_duration = 2;  // s
  int max_agent_steps = 300;
  int hidden_width = 200;
  int hidden_count = 3;
  double learning_rate = 1e-4;
  std::uint64_t seed = 1;
  bool value_baseline = false;  // learned value network instead of the batch mean

  void validate() const;  // throws ConfigError
};

struct Transition {
  Eigen::VectorXd state;
  int action = 0;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  int episode = 0;
  int step = 0;
};

/// Bounded FIFO; the oldest transition is evicted first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return items_[i]; }
  /// min(n, size) distinct transitions, uniformly without replacement.
  std::vector<Transition> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

struct EpisodeTrace {
  std::vector<Eigen::VectorXd> states;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<double> returns;
  std::vector<double> baseline;

  std::size_t size() const { return rewards.size(); }
  double cumulative_negative_reward() const;
  std::vector<double> advantages() const;
};

Eigen::VectorXd encode_state(std::span<const bool> sensors);
double compute_reward(double old_wait, double new_wait);
int select_action(const nn::Network& net, const Eigen::VectorXd& state, Rng& rng);

/// R_t = r_t + gamma * R_{t+1}, R_T = r_T.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

/// Fills each trace's baseline with the mean return across the batch at the
/// same position; positions a trace lacks do not contribute.
void baseline_values(std::vector<EpisodeTrace>& batch);

/// Groups sampled transitions into traces (one per episode, in step order)
/// and fills in their returns.
std::vector<EpisodeTrace> group_traces(std::vector<Transition> transitions, double gamma);

/// g = (1/m) sum_i sum_t grad log pi(a_t|s_t) A_t over m traces, then one
/// ascent step.
nn::Gradients policy_gradient(const nn::Network& net, const std::vector<EpisodeTrace>& batch);
void policy_update(nn::Network& net, const std::vector<EpisodeTrace>& batch, nn::OptimizerState& opt);

struct EpisodeMetrics {
  int episode = 0;
  double cumulative_delay = 0.0;     // s
  double average_queue = 0.0;        // vehicles
  double cumulative_negative_reward = 0.0;
  double sim_time = 0.0;             // s
  std::size_t arrived = 0;
  std::size_t spawned = 0;
  int agent_steps = 0;
};

using SimFactory = std::function<std::unique_ptr<sim::Simulation>(int episode)>;

struct TrainingHooks {
  /// Called after every simulator step.
  std::function<void(sim::Simulation&, int episode)> on_step;
  std::function<void(const EpisodeMetrics&)> on_episode;
  /// Called once per stored transition (tests).
  std::function<void(const Transition&, double wait_before, double wait_after)> on_transition;
};

struct TrainResult {
  nn::Network policy;
  std::vector<EpisodeMetrics> metrics;
  std::size_t buffer_size = 0;
};

TrainResult run_training(const TrainConfig& config, const SimFactory& make_sim, const TrainingHooks& hooks = {});

/// Advances through any yellow, then `green` more steps (or until finished).
void advance_decision(sim::Simulation& sim, int green,
                      const std::function<void(sim::Simulation&)>& on_step = {});

}  // namespace flow::agent
