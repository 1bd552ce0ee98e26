#include "flow/pgagent.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace flow::agent {

void TrainConfig::validate() const {
  if (episodes < 0) throw ConfigError("episodes", "must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (buffer_capacity < 1) throw ConfigError("buffer_capacity", "must be >= 1");
  if (batch_size > buffer_capacity) throw ConfigError("batch_size", "must not exceed buffer_capacity");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma", "must lie in [0, 1]");
  if (green_duration < 1) throw ConfigError("green_duration", "must be >= 1");
  if (yellow_duration < 1) throw ConfigError("yellow_duration", "must be >= 1");
  if (max_agent_steps < 1) throw ConfigError("max_agent_steps", "must be >= 1");
  if (hidden_width < 1) throw ConfigError("hidden_width", "must be >= 1");
  if (hidden_count < 1) throw ConfigError("hidden_count", "must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate", "must be positive");
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(t));
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  n = std::min(n, items_.size());
  std::vector<std::size_t> idx(items_.size());
  std::iota(idx.begin(), idx.end(), 0);
  // partial Fisher-Yates
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + uniform_below(rng, idx.size() - i)]);
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(items_[idx[i]]);
  return out;
}

double EpisodeTrace::cumulative_negative_reward() const {
  double s = 0.0;
  for (double r : rewards)
    if (r < 0.0) s += r;
  return s;
}

std::vector<double> EpisodeTrace::advantages() const {
  std::vector<double> a(returns.size());
  for (std::size_t t = 0; t < a.size(); ++t) a[t] = returns[t] - baseline[t];
  return a;
}

Eigen::VectorXd encode_state(std::span<const bool> sensors) {
  if (sensors.size() != sim::kSensorCount)
    throw std::invalid_argument("state needs " + std::to_string(sim::kSensorCount) + " sensor values, got " +
                                std::to_string(sensors.size()));
  Eigen::VectorXd x(static_cast<Eigen::Index>(sensors.size()));
  for (std::size_t i = 0; i < sensors.size(); ++i) x[static_cast<Eigen::Index>(i)] = sensors[i] ? 1.0 : 0.0;
  return x;
}

double compute_reward(double old_wait, double new_wait) { return old_wait - new_wait; }

int select_action(const nn::Network& net, const Eigen::VectorXd& state, Rng& rng) {
  const Eigen::VectorXd p = nn::forward(net, state);
  return static_cast<int>(sample_categorical(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), rng));
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    out[t] = acc;
  }
  return out;
}

void baseline_values(std::vector<EpisodeTrace>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  std::size_t longest = 0;
  for (const auto& tr : batch) longest = std::max(longest, tr.returns.size());
  std::vector<double> sum(longest, 0.0);
  std::vector<int> n(longest, 0);
  for (const auto& tr : batch)
    for (std::size_t t = 0; t < tr.returns.size(); ++t) {
      sum[t] += tr.returns[t];
      ++n[t];
    }
  for (auto& tr : batch) {
    tr.baseline.resize(tr.returns.size());
    for (std::size_t t = 0; t < tr.returns.size(); ++t) tr.baseline[t] = sum[t] / n[t];
  }
}

std::vector<EpisodeTrace> group_traces(std::vector<Transition> transitions, double gamma) {
  std::sort(transitions.begin(), transitions.end(), [](const Transition& a, const Transition& b) {
    return a.episode != b.episode ? a.episode < b.episode : a.step < b.step;
  });
  std::vector<EpisodeTrace> out;
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    if (i == 0 || transitions[i].episode != transitions[i - 1].episode) out.emplace_back();
    auto& tr = out.back();
    tr.states.push_back(std::move(transitions[i].state));
    tr.actions.push_back(transitions[i].action);
    tr.rewards.push_back(transitions[i].reward);
  }
  for (auto& tr : out) tr.returns = discounted_returns(tr.rewards, gamma);
  return out;
}

nn::Gradients policy_gradient(const nn::Network& net, const std::vector<EpisodeTrace>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  nn::Gradients g = net.zero_gradients();
  for (const auto& tr : batch) {
    if (tr.baseline.size() != tr.returns.size() || tr.returns.size() != tr.actions.size())
      throw std::invalid_argument("trace is missing returns or baseline");
    const auto adv = tr.advantages();
    for (std::size_t t = 0; t < adv.size(); ++t) {
      if (!std::isfinite(adv[t])) throw std::invalid_argument("non-finite advantage");
      if (adv[t] == 0.0) continue;
      auto gt = nn::logp_gradient(net, tr.states[t], tr.actions[t]);
      gt *= adv[t];
      g += gt;
    }
  }
  g *= 1.0 / static_cast<double>(batch.size());
  return g;
}

void policy_update(nn::Network& net, const std::vector<EpisodeTrace>& batch, nn::OptimizerState& opt) {
  nn::apply_update(net, policy_gradient(net, batch), 1.0, opt);
}

void advance_decision(sim::Simulation& sim, int green, const std::function<void(sim::Simulation&)>& on_step) {
  auto one = [&] {
    sim.step();
    if (on_step) on_step(sim);
  };
  while (!sim.finished() && sim.signal().state() == sim::LightState::yellow) one();
  for (int i = 0; i < green && !sim.finished(); ++i) one();
}

namespace {

// Fits the value network towards the sampled returns (mean squared error)
// and uses its predictions as the baseline.
void value_baseline(nn::Network& value, nn::OptimizerState& opt, std::vector<EpisodeTrace>& batch) {
  nn::Gradients g = value.zero_gradients();
  std::size_t n = 0;
  for (auto& tr : batch) {
    tr.baseline.resize(tr.returns.size());
    for (std::size_t t = 0; t < tr.returns.size(); ++t) {
      const double v = value.output(tr.states[t])[0];
      tr.baseline[t] = v;
      Eigen::VectorXd d(1);
      d[0] = tr.returns[t] - v;  // ascent on -(R - V)^2 / 2
      g += value.backprop(tr.states[t], d);
      ++n;
    }
  }
  if (n > 0) nn::apply_update(value, g, 1.0 / static_cast<double>(n), opt);
}

}  // namespace

TrainResult run_training(const TrainConfig& config, const SimFactory& make_sim, const TrainingHooks& hooks) {
  config.validate();
  TrainResult result;
  result.policy = nn::init_network(config.hidden_width, config.hidden_count, derive_seed(config.seed, 1));
  nn::OptimizerState opt;
  opt.learning_rate = config.learning_rate;

  nn::Network value;
  nn::OptimizerState value_opt;
  value_opt.learning_rate = config.learning_rate;
  if (config.value_baseline) {
    std::vector<int> sizes{static_cast<int>(sim::kSensorCount)};
    sizes.insert(sizes.end(), static_cast<std::size_t>(config.hidden_count), config.hidden_width);
    sizes.push_back(1);
    value = nn::Network::init(sizes, derive_seed(config.seed, 2));
  }

  ReplayBuffer buffer(static_cast<std::size_t>(config.buffer_capacity));
  Rng action_rng(derive_seed(config.seed, 3));
  Rng sample_rng(derive_seed(config.seed, 4));

  for (int ep = 0; ep < config.episodes; ++ep) {
    auto sim = make_sim(ep);
    if (!sim) throw std::runtime_error("episode " + std::to_string(ep) + ": simulator factory returned nothing");
    EpisodeMetrics m;
    m.episode = ep;
    try {
      const auto on_step = [&](sim::Simulation& s) {
        if (hooks.on_step) hooks.on_step(s, ep);
      };
      while (!sim->finished() && m.agent_steps < config.max_agent_steps) {
        Transition t;
        t.state = encode_state(sim->read_sensors());
        t.action = select_action(result.policy, t.state, action_rng);
        const double before = sim->cumulative_wait();
        sim->set_phase(t.action);
        advance_decision(*sim, config.green_duration, on_step);
        const double after = sim->cumulative_wait();
        t.reward = compute_reward(before, after);
        t.next_state = encode_state(sim->read_sensors());
        t.episode = ep;
        t.step = m.agent_steps++;
        if (t.reward < 0.0) m.cumulative_negative_reward += t.reward;
        if (hooks.on_transition) hooks.on_transition(t, before, after);
        buffer.push(std::move(t));
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("episode " + std::to_string(ep) + " at t=" + std::to_string(sim->clock()) + ": " +
                               e.what());
    }
    m.cumulative_delay = sim->totals().cumulative_delay;
    m.average_queue = sim->totals().average_queue();
    m.sim_time = sim->clock();
    m.arrived = sim->arrived_count();
    m.spawned = sim->spawned_count();

    if (buffer.size() > 0) {
      auto batch = group_traces(buffer.sample(static_cast<std::size_t>(config.batch_size), sample_rng), config.gamma);
      if (config.value_baseline)
        value_baseline(value, value_opt, batch);
      else
        baseline_values(batch);
      policy_update(result.policy, batch, opt);
    }
    result.metrics.push_back(m);
    if (hooks.on_episode) hooks.on_episode(m);
  }
  result.buffer_size = buffer.size();
  return result;
}

}  // namespace flow::agent
