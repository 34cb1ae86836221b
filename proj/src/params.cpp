#include "skinrf/params.hpp"

#include <string>

#include "skinrf/error.hpp"

namespace skinrf {

BlockId ParamStore::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 0 || cols < 0) throw StructuralError("negative parameter block shape for " + name);
  if (find(name)) throw StructuralError("duplicate parameter block " + name);
  ParamBlock b;
  b.name = std::move(name);
  b.offset = data_.size();
  b.rows = rows;
  b.cols = cols;
  data_.resize(data_.size() + b.size(), 0.0);
  blocks_.push_back(std::move(b));
  return static_cast<BlockId>(blocks_.size() - 1);
}

std::optional<BlockId> ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].name == name) return static_cast<BlockId>(i);
  }
  return std::nullopt;
}

BlockId ParamStore::require(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw StructuralError("parameter block '" + std::string(name) + "' not found");
}

void ParamStore::freeze_all() {
  for (auto& b : blocks_) b.trainable = false;
}

Eigen::Map<Eigen::MatrixXd> ParamStore::matrix(BlockId id) {
  const ParamBlock& b = block(id);
  return {data_.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<const Eigen::MatrixXd> ParamStore::matrix(BlockId id) const {
  const ParamBlock& b = block(id);
  return {data_.data() + b.offset, b.rows, b.cols};
}

void ParamStore::validate_layout() const {
  std::size_t expected = 0;
  for (const auto& b : blocks_) {
    if (b.offset != expected) {
      throw StructuralError("parameter block " + b.name + " starts at " + std::to_string(b.offset) + ", expected " +
                            std::to_string(expected));
    }
    expected += b.size();
  }
  if (expected != data_.size()) {
    throw StructuralError("parameter layout covers " + std::to_string(expected) + " of " +
                          std::to_string(data_.size()) + " values");
  }
}

void ParamStore::fill_uniform(BlockId id, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto m = matrix(id);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

void ParamStore::fill_normal(BlockId id, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  auto m = matrix(id);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

void ParamStore::fill_constant(BlockId id, double value) { matrix(id).setConstant(value); }

ParamStore ParamStore::from_layout(std::vector<ParamBlock> blocks, std::vector<double> values) {
  ParamStore s;
  s.blocks_ = std::move(blocks);
  s.data_ = std::move(values);
  s.validate_layout();
  return s;
}

}  // namespace skinrf
