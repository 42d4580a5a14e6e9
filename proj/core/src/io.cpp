#include "maelab/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace maelab {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Trim to the shortest representation that round-trips.
  for (int prec = 1; prec < 17; ++prec) {
    char shorter[64];
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
    double parsed = 0.0;
    std::sscanf(shorter, "%lf", &parsed);
    if (parsed == v) return shorter;
  }
  return buf;
}

namespace container {

namespace {

constexpr char kMagicMatrix[8] = {'M', 'L', 'A', 'B', 'M', 'A', 'T', '1'};
constexpr char kMagicBundle[8] = {'M', 'L', 'A', 'B', 'B', 'N', 'D', '1'};
constexpr char kMagicDataset[8] = {'M', 'L', 'A', 'B', 'D', 'S', 'T', '1'};

void write_u64(std::ofstream& f, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  f.write(buf, 8);
}

std::uint64_t read_u64(std::ifstream& f) {
  char buf[8];
  f.read(buf, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

void write_doubles(std::ofstream& f, const std::vector<double>& data) {
  // Little-endian on all supported targets.
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
}

void read_doubles(std::ifstream& f, std::vector<double>& data) {
  f.read(reinterpret_cast<char*>(data.data()),
         static_cast<std::streamsize>(data.size() * sizeof(double)));
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContractViolation("container: cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path, const char (&magic)[8]) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContractViolation("container: cannot open for reading: " + path);
  char buf[8];
  f.read(buf, 8);
  if (!f || std::memcmp(buf, magic, 8) != 0)
    throw ContractViolation("container: bad magic in " + path);
  return f;
}

void write_matrix_body(std::ofstream& f, const DenseMatrix& m) {
  write_u64(f, m.rows);
  write_u64(f, m.cols);
  write_doubles(f, m.data);
}

DenseMatrix read_matrix_body(std::ifstream& f) {
  const std::uint64_t rows = read_u64(f);
  const std::uint64_t cols = read_u64(f);
  DenseMatrix m(rows, cols);
  read_doubles(f, m.data);
  if (!f) throw ContractViolation("container: truncated matrix payload");
  return m;
}

}  // namespace

void write_matrix(const std::string& path, const DenseMatrix& m) {
  std::ofstream f = open_out(path);
  f.write(kMagicMatrix, 8);
  write_matrix_body(f, m);
}

DenseMatrix read_matrix(const std::string& path) {
  std::ifstream f = open_in(path, kMagicMatrix);
  return read_matrix_body(f);
}

void write_matrices(const std::string& path,
                    const std::vector<std::pair<std::string, DenseMatrix>>& entries) {
  std::ofstream f = open_out(path);
  f.write(kMagicBundle, 8);
  write_u64(f, entries.size());
  for (const auto& [name, m] : entries) {
    write_u64(f, name.size());
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_matrix_body(f, m);
  }
}

std::vector<std::pair<std::string, DenseMatrix>> read_matrices(const std::string& path) {
  std::ifstream f = open_in(path, kMagicBundle);
  const std::uint64_t count = read_u64(f);
  std::vector<std::pair<std::string, DenseMatrix>> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = read_u64(f);
    std::string name(name_len, '\0');
    f.read(name.data(), static_cast<std::streamsize>(name_len));
    out.emplace_back(std::move(name), read_matrix_body(f));
  }
  return out;
}

void write_vector_dataset(const std::string& path, const VectorDataset& ds) {
  std::ofstream f = open_out(path);
  f.write(kMagicDataset, 8);
  write_u64(f, ds.points.size());
  write_u64(f, ds.dim);
  for (const DenseVector& p : ds.points) write_doubles(f, p.data);
  for (std::size_t id : ds.cluster_ids) write_u64(f, id);
}

VectorDataset read_vector_dataset(const std::string& path) {
  std::ifstream f = open_in(path, kMagicDataset);
  const std::uint64_t n = read_u64(f);
  const std::uint64_t dim = read_u64(f);
  VectorDataset ds;
  ds.dim = dim;
  ds.points.assign(n, DenseVector(dim));
  for (DenseVector& p : ds.points) read_doubles(f, p.data);
  ds.cluster_ids.resize(n);
  for (std::size_t& id : ds.cluster_ids) id = read_u64(f);
  if (!f) throw ContractViolation("container: truncated dataset payload");
  return ds;
}

}  // namespace container

struct CsvWriter::Impl {
  std::ofstream file;
};

CsvWriter::CsvWriter(const std::string& path, const std::string& schema_version,
                     const std::vector<std::string>& columns)
    : impl_(new Impl), n_columns_(columns.size()) {
  impl_->file.open(path, std::ios::trunc);
  if (!impl_->file) {
    delete impl_;
    throw ContractViolation("CsvWriter: cannot open " + path);
  }
  impl_->file << "# " << schema_version << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i)
    impl_->file << columns[i] << (i + 1 == columns.size() ? "\n" : ",");
}

CsvWriter::~CsvWriter() {
  close();
  delete impl_;
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != n_columns_)
    throw ContractViolation("CsvWriter: cell count does not match header");
  for (std::size_t i = 0; i < cells.size(); ++i)
    impl_->file << cells[i] << (i + 1 == cells.size() ? "\n" : ",");
}

void CsvWriter::close() {
  if (impl_->file.is_open()) impl_->file.close();
}

void write_vector_dataset_csv(const std::string& path, const VectorDataset& ds) {
  std::vector<std::string> columns;
  columns.push_back("cluster");
  for (std::size_t i = 0; i < ds.dim; ++i) columns.push_back("x" + std::to_string(i));
  CsvWriter csv(path, "maelab dataset csv v1", columns);
  std::vector<std::string> cells(ds.dim + 1);
  for (std::size_t p = 0; p < ds.points.size(); ++p) {
    cells[0] = std::to_string(ds.cluster_ids[p]);
    for (std::size_t i = 0; i < ds.dim; ++i) cells[i + 1] = format_double(ds.points[p][i]);
    csv.row(cells);
  }
}

}  // namespace maelab
