#include "knowgpt/bandit.hpp"

#include <cmath>

#include "knowgpt/binary_io.hpp"
#include "knowgpt/error.hpp"

namespace knowgpt {

std::string arm_name(ArmId arm) {
  return std::string(to_string(arm.extractor())) + "x" + std::string(to_string(arm.template_id()));
}

double gamma_of_delta(double delta) {
  if (!(delta > 0.0 && delta <= 2.0)) {
    throw ConfigError("delta must be in (0, 2], got " + std::to_string(delta));
  }
  return 1.0 + std::sqrt(std::log(2.0 / delta) / 2.0);
}

BanditModel::BanditModel(std::size_t dim, double lambda, double delta, std::size_t arm_count)
    : dim_(dim), lambda_(lambda), delta_(delta), gamma_(gamma_of_delta(delta)) {
  if (dim == 0) throw ConfigError("bandit dimension must be positive");
  if (!(lambda > 0.0)) throw ConfigError("bandit lambda must be > 0");
  if (arm_count == 0) throw ConfigError("bandit needs at least one arm");
  const auto d = static_cast<Eigen::Index>(dim);
  arms_.resize(arm_count);
  for (auto& arm : arms_) {
    arm.a_mat = lambda * Eigen::MatrixXd::Identity(d, d);
    arm.b_vec = Eigen::VectorXd::Zero(d);
    arm.factor.compute(arm.a_mat);
  }
}

void BanditModel::check_arm(ArmId a) const {
  if (a.index < 0 || static_cast<std::size_t>(a.index) >= arms_.size()) {
    throw ConfigError("arm index " + std::to_string(a.index) + " out of range");
  }
}

const ArmState& BanditModel::arm(ArmId a) const {
  check_arm(a);
  return arms_[static_cast<std::size_t>(a.index)];
}

Eigen::VectorXd BanditModel::to_vector(std::span<const float> c) const {
  if (c.size() != dim_) {
    throw ConfigError("context has dim " + std::to_string(c.size()) + ", bandit expects " +
                      std::to_string(dim_));
  }
  return Eigen::Map<const Eigen::VectorXf>(c.data(), static_cast<Eigen::Index>(c.size()))
      .cast<double>();
}

Eigen::VectorXd BanditModel::alpha(ArmId a) const {
  const auto& s = arm(a);
  if (s.factor.info() != Eigen::Success) {
    throw NumericError("arm " + std::to_string(a.index) + ": a_mat is not positive definite");
  }
  Eigen::VectorXd x = s.factor.solve(s.b_vec);
  if (!x.allFinite()) {
    throw NumericError("arm " + std::to_string(a.index) + ": non-finite ridge solution after " +
                       std::to_string(s.n_obs) + " observations");
  }
  return x;
}

double BanditModel::exploration(ArmId a, std::span<const float> c) const {
  const auto& s = arm(a);
  Eigen::VectorXd cv = to_vector(c);
  // c^T A^-1 c = |L^-1 c|^2
  Eigen::VectorXd y = s.factor.matrixL().solve(cv);
  return std::sqrt(std::max(0.0, y.squaredNorm()));
}

double BanditModel::expectation(ArmId a, std::span<const float> c) const {
  Eigen::VectorXd cv = to_vector(c);
  return cv.dot(alpha(a)) + gamma_ * exploration(a, c);
}

ArmId BanditModel::select(std::span<const float> c) const {
  ArmId best{0};
  double best_value = expectation(best, c);
  for (std::size_t i = 1; i < arms_.size(); ++i) {
    ArmId a{static_cast<int>(i)};
    double v = expectation(a, c);
    if (v > best_value) {
      best_value = v;
      best = a;
    }
  }
  return best;
}

ArmId BanditModel::select_among(std::span<const float> c, std::span<const ArmId> allowed) const {
  if (allowed.empty()) throw ConfigError("select_among: no allowed arm");
  ArmId best = allowed[0];
  double best_value = expectation(best, c);
  for (std::size_t i = 1; i < allowed.size(); ++i) {
    double v = expectation(allowed[i], c);
    if (v > best_value || (v == best_value && allowed[i] < best)) {
      best_value = v;
      best = allowed[i];
    }
  }
  return best;
}

void BanditModel::update(ArmId a, std::span<const float> c, BanditReward r) {
  check_arm(a);
  if (r.value != 0 && r.value != 1) throw ConfigError("bandit reward must be 0 or 1");
  Eigen::VectorXd cv = to_vector(c);
  auto& s = arms_[static_cast<std::size_t>(a.index)];
  // c_i c_j == c_j c_i in IEEE arithmetic, so a_mat stays exactly symmetric.
  s.a_mat.noalias() += cv * cv.transpose();
  if (r.value == 1) s.b_vec += cv;
  ++s.n_obs;
  s.factor.rankUpdate(cv, 1.0);
  if (s.factor.info() != Eigen::Success) s.factor.compute(s.a_mat);
}

namespace {
constexpr std::string_view kBanditMagic = "KGMB";
constexpr std::uint32_t kBanditVersion = 1;
}  // namespace

void BanditModel::save(const std::filesystem::path& path) const {
  auto out = io::open_binary_output(path);
  io::write_magic(out, kBanditMagic);
  io::write_le<std::uint32_t>(out, kBanditVersion);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(arms_.size()));
  io::write_le<double>(out, lambda_);
  io::write_le<double>(out, delta_);
  for (const auto& s : arms_) {
    io::write_le<std::uint64_t>(out, s.n_obs);
    for (Eigen::Index r = 0; r < s.a_mat.rows(); ++r) {
      for (Eigen::Index c = 0; c < s.a_mat.cols(); ++c) io::write_le<double>(out, s.a_mat(r, c));
    }
    for (Eigen::Index i = 0; i < s.b_vec.size(); ++i) io::write_le<double>(out, s.b_vec(i));
  }
  if (!out) throw Error("write failed: " + path.string());
}

BanditModel BanditModel::load(const std::filesystem::path& path) {
  auto in = io::open_binary_input(path);
  io::expect_magic(in, kBanditMagic);
  auto version = io::read_le<std::uint32_t>(in, "version");
  if (version != kBanditVersion) {
    throw FormatError(path.string() + ": unsupported KGMB version " + std::to_string(version));
  }
  auto d = io::read_le<std::uint32_t>(in, "d");
  auto arms = io::read_le<std::uint32_t>(in, "arm_count");
  auto lambda = io::read_le<double>(in, "lambda");
  auto delta = io::read_le<double>(in, "delta");
  BanditModel m(d, lambda, delta, arms);
  for (auto& s : m.arms_) {
    s.n_obs = io::read_le<std::uint64_t>(in, "n_obs");
    for (Eigen::Index r = 0; r < s.a_mat.rows(); ++r) {
      for (Eigen::Index c = 0; c < s.a_mat.cols(); ++c) s.a_mat(r, c) = io::read_le<double>(in, "a_mat");
    }
    for (Eigen::Index i = 0; i < s.b_vec.size(); ++i) s.b_vec(i) = io::read_le<double>(in, "b_vec");
    if (!s.a_mat.allFinite() || !s.b_vec.allFinite()) {
      throw FormatError(path.string() + ": non-finite bandit state");
    }
    s.factor.compute(s.a_mat);
    if (s.factor.info() != Eigen::Success) {
      throw FormatError(path.string() + ": stored a_mat is not positive definite");
    }
  }
  io::expect_eof(in, path);
  return m;
}

}  // namespace knowgpt
