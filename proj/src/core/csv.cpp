#include "core/csv.hpp"

#include <charconv>
#include <sstream>

#include "core/errors.hpp"

namespace tempscale {

std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

std::string fmt_int(long long v) { return std::to_string(v); }

CsvWriter::CsvWriter(const std::string& path) : out_(path, std::ios::binary), path_(path) {
  if (!out_) throw IoError("cannot open '" + path + "' for writing");
}

CsvWriter::~CsvWriter() = default;

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << fields[i];
  }
  out_ << '\n';
  if (!out_) throw IoError("write failed on '" + path_ + "'");
}

void CsvWriter::close() {
  out_.close();
  if (out_.fail()) throw IoError("close failed on '" + path_ + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  out.close();
  if (out.fail()) throw IoError("write failed on '" + path + "'");
}

}  // namespace tempscale
