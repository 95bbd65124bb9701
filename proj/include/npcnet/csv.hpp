#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace npcnet {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Minimal RFC-4180-ish CSV support: comma separated, double quotes for
// fields containing commas/quotes/newlines, UTF-8 passthrough, required
// header row.
namespace csv {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c == '\r') {
      // tolerate CRLF
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }

  int require_column(const std::string& name, const std::string& file) const {
    int idx = column(name);
    if (idx < 0) {
      throw DataError(file + ": missing required column '" + name + "'");
    }
    return idx;
  }
};

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  Table table;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file, header row required");
  table.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != table.header.size()) {
      throw DataError(path + ": row with " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  return table;
}

inline std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

class Writer {
 public:
  explicit Writer(const std::string& path)
      : owned_(std::make_unique<std::ofstream>(path, std::ios::binary)),
        out_(owned_.get()) {
    if (!*owned_) throw DataError("cannot open file for writing: " + path);
  }

  explicit Writer(std::ostream& out) : out_(&out) {}

  void write_row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) *out_ << ',';
      *out_ << quote(fields[i]);
    }
    *out_ << '\n';
  }

 private:
  std::unique_ptr<std::ofstream> owned_;
  std::ostream* out_;
};

inline double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(context + ": cannot parse number '" + s + "'");
  }
}

inline long parse_long(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(context + ": cannot parse integer '" + s + "'");
  }
}

// Fixed-format double for reproducible reports: shortest representation
// that round-trips.
inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  std::string s = os.str();
  // prefer the shorter form when it still round-trips
  for (int prec = 1; prec < 17; ++prec) {
    std::ostringstream trial;
    trial.precision(prec);
    trial << v;
    if (std::stod(trial.str()) == v) return trial.str();
  }
  return s;
}

}  // namespace csv
}  // namespace npcnet
