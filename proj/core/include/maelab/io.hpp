#pragma once

#include <string>
#include <utility>
#include <vector>

#include "maelab/datasets.hpp"
#include "maelab/matrix.hpp"

namespace maelab {

/// Deterministic text form of a double: shortest round-trip representation.
/// All CSV and JSON numbers go through this so identical runs emit identical
/// bytes.
std::string format_double(double v);

/// Simple binary container: magic, u64 dims header, little-endian doubles.
/// Used for datasets and model checkpoints.
namespace container {

void write_matrix(const std::string& path, const DenseMatrix& m);
DenseMatrix read_matrix(const std::string& path);

/// Named-matrix bundle (model checkpoints).
void write_matrices(const std::string& path,
                    const std::vector<std::pair<std::string, DenseMatrix>>& entries);
std::vector<std::pair<std::string, DenseMatrix>> read_matrices(const std::string& path);

void write_vector_dataset(const std::string& path, const VectorDataset& ds);
VectorDataset read_vector_dataset(const std::string& path);

}  // namespace container

/// Line-buffered CSV emitter. The first line is a versioned schema comment,
/// the second the column header.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& schema_version,
            const std::vector<std::string>& columns);
  ~CsvWriter();

  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void row(const std::vector<std::string>& cells);
  void close();

 private:
  struct Impl;
  Impl* impl_;
  std::size_t n_columns_;
};

void write_vector_dataset_csv(const std::string& path, const VectorDataset& ds);

}  // namespace maelab
