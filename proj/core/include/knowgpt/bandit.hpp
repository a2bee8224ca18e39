#pragma once

// Contextual bandit over extraction x template arms: per-arm ridge
// regression on question-context embeddings plus an upper-confidence bonus.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "knowgpt/prompt_render.hpp"

namespace knowgpt {

inline constexpr std::size_t kArmCount = 6;

// Row-major over (extractor, template): P_sub x {F_t, F_s, F_g} = 0..2,
// P_RL x {F_t, F_s, F_g} = 3..5.
struct ArmId {
  int index = 0;

  static ArmId of(Extractor e, TemplateId t) {
    return ArmId{static_cast<int>(e) * 3 + static_cast<int>(t)};
  }
  Extractor extractor() const { return static_cast<Extractor>(index / 3); }
  TemplateId template_id() const { return static_cast<TemplateId>(index % 3); }

  friend auto operator<=>(ArmId, ArmId) = default;
};

std::string arm_name(ArmId arm);

struct BanditReward {
  int value = 0;  // 0 or 1
};

// gamma = 1 + sqrt(ln(2/delta) / 2); throws ConfigError unless 0 < delta <= 2.
double gamma_of_delta(double delta);

struct ArmState {
  Eigen::MatrixXd a_mat;  // lambda*I + sum c c^T
  Eigen::VectorXd b_vec;  // sum r c
  std::uint64_t n_obs = 0;
  // Cholesky factor of a_mat, maintained by rank-one updates.
  Eigen::LLT<Eigen::MatrixXd> factor;
};

// Single writer: update() must be serialised; the const queries may run
// concurrently between updates.
class BanditModel {
 public:
  BanditModel(std::size_t dim, double lambda = 1.0, double delta = 0.1,
              std::size_t arm_count = kArmCount);

  std::size_t dim() const { return dim_; }
  std::size_t arm_count() const { return arms_.size(); }
  double lambda() const { return lambda_; }
  double delta() const { return delta_; }
  double gamma() const { return gamma_; }
  // Overrides the exploration weight (0 disables the UCB bonus).
  void set_gamma(double gamma) { gamma_ = gamma; }

  const ArmState& arm(ArmId a) const;

  // Ridge solution of a_mat * alpha = b_vec. Throws NumericError when the
  // factorisation fails or the solution is not finite.
  Eigen::VectorXd alpha(ArmId a) const;
  // sqrt(c^T a_mat^-1 c).
  double exploration(ArmId a, std::span<const float> c) const;
  // c . alpha + gamma * exploration.
  double expectation(ArmId a, std::span<const float> c) const;
  // argmax of expectation, lowest index on ties.
  ArmId select(std::span<const float> c) const;
  // Same rule restricted to `allowed` (must be non-empty).
  ArmId select_among(std::span<const float> c, std::span<const ArmId> allowed) const;

  void update(ArmId a, std::span<const float> c, BanditReward r);

  // KGMB v1: "KGMB", u32 version, u32 d, u32 arm_count, f64 lambda, f64 delta,
  // then per arm u64 n_obs, d*d f64 a_mat (row-major), d f64 b_vec; all LE.
  void save(const std::filesystem::path& path) const;
  static BanditModel load(const std::filesystem::path& path);

 private:
  Eigen::VectorXd to_vector(std::span<const float> c) const;
  void check_arm(ArmId a) const;

  std::size_t dim_;
  double lambda_;
  double delta_;
  double gamma_;
  std::vector<ArmState> arms_;
};

}  // namespace knowgpt
