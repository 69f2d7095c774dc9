#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace gmmot {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using LabelVector = Eigen::VectorXi;

// Bad input: wrong sizes, non-finite values, broken invariants.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Filesystem and parse failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

// Runs f, prefixing any library error with the name of the pipeline stage.
template <typename F>
decltype(auto) in_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError(stage + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(stage + ": " + e.what());
  }
}

}  // namespace gmmot
