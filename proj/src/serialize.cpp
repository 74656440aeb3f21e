#include "metahpo/serialize.hpp"

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "metahpo/errors.hpp"
#include "metahpo/text_io.hpp"

namespace metahpo {

namespace {
constexpr const char* kMagic = "metahpo-tensors";
}

void write_params(std::ostream& out, const ParamList& params) {
  out << kMagic << " 1\n" << params.size() << "\n";
  for (const Param* p : params) {
    out << p->name << ' ' << p->value.rows() << ' ' << p->value.cols() << '\n';
    for (std::size_t r = 0; r < p->value.rows(); ++r) {
      const auto row = p->value.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out << ' ';
        out << format_double(row[c]);
      }
      out << '\n';
    }
  }
}

void read_params(std::istream& in, const ParamList& params) {
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  if (!(in >> magic >> version >> count) || magic != kMagic || version != 1) {
    throw FormatError("not a metahpo tensor dump");
  }
  std::map<std::string, Matrix> loaded;
  for (std::size_t t = 0; t < count; ++t) {
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols)) throw FormatError("truncated tensor header");
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
      std::string token;
      if (!(in >> token)) throw FormatError("truncated tensor '" + name + "'");
      m[i] = parse_double(token);
    }
    loaded.emplace(std::move(name), std::move(m));
  }
  for (Param* p : params) {
    auto it = loaded.find(p->name);
    if (it == loaded.end()) throw FormatError("tensor '" + p->name + "' missing from dump");
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
      throw ShapeError("tensor '" + p->name + "' has a different shape in dump");
    }
    p->value = it->second;
  }
}

void save_params(const std::filesystem::path& path, const ParamList& params) {
  std::ostringstream out;
  write_params(out, params);
  write_file_atomic(path, out.str());
}

void load_params(const std::filesystem::path& path, const ParamList& params) {
  std::istringstream in(read_file(path));
  read_params(in, params);
}

}  // namespace metahpo
