#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace tempscale {

// Shortest decimal string that round-trips to the same double. Locale-free.
std::string fmt_double(double v);

std::string fmt_int(long long v);

// Minimal CSV writer: comma separator, '\n' line ends, no quoting (all
// emitted fields are numeric or simple identifiers).
class CsvWriter {
public:
  explicit CsvWriter(const std::string& path);
  ~CsvWriter();

  void row(const std::vector<std::string>& fields);
  void close();

private:
  std::ofstream out_;
  std::string path_;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace tempscale
