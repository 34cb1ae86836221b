#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace skinrf {

using BlockId = int;

// One named matrix inside the flat parameter vector, stored column-major.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool trainable = true;

  std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

// Flat trainable parameter store with a layout map. Blocks tile the vector in order
// without gaps or overlaps.
class ParamStore {
 public:
  BlockId add(std::string name, Eigen::Index rows, Eigen::Index cols);

  const ParamBlock& block(BlockId id) const { return blocks_.at(static_cast<std::size_t>(id)); }
  std::optional<BlockId> find(std::string_view name) const;
  BlockId require(std::string_view name) const;
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  void set_trainable(BlockId id, bool trainable) { blocks_.at(static_cast<std::size_t>(id)).trainable = trainable; }
  void freeze_all();

  Eigen::Map<Eigen::MatrixXd> matrix(BlockId id);
  Eigen::Map<const Eigen::MatrixXd> matrix(BlockId id) const;

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::size_t size() const { return data_.size(); }

  // Throws StructuralError if blocks do not exactly partition the vector.
  void validate_layout() const;

  void fill_uniform(BlockId id, double bound, std::mt19937_64& rng);
  void fill_normal(BlockId id, double stddev, std::mt19937_64& rng);
  void fill_constant(BlockId id, double value);

  // Rebuild from a serialized layout and value vector.
  static ParamStore from_layout(std::vector<ParamBlock> blocks, std::vector<double> values);

 private:
  std::vector<ParamBlock> blocks_;
  std::vector<double> data_;
};

}  // namespace skinrf
