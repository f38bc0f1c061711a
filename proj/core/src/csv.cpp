#include "dpars/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dpars/error.hpp"

namespace dpars::csv {

std::size_t Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw FormatError("csv", "missing column '" + name + "'");
}

Table parse(const std::string& text, const std::string& source) {
  Table table;
  const char* p = text.data();
  const char* const end = p + text.size();
  std::size_t line_no = 0;

  auto next_line = [&]() -> std::string_view {
    const char* start = p;
    while (p < end && *p != '\n') ++p;
    std::string_view line(start, static_cast<std::size_t>(p - start));
    if (p < end) ++p;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    return line;
  };

  bool have_header = false;
  while (p < end && !have_header) {
    const auto line = next_line();
    if (line.empty()) continue;
    if (line.front() == '#') {
      auto body = line.substr(1);
      if (!body.empty() && body.front() == ' ') body.remove_prefix(1);
      table.comments.emplace_back(body);
      continue;
    }
    std::size_t pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      table.header.emplace_back(line.substr(pos, comma == std::string_view::npos ? line.npos : comma - pos));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    have_header = true;
  }
  if (!have_header) throw FormatError("csv", source + ": no header row");

  const std::size_t cols = table.header.size();
  table.values.cols = cols;
  while (p < end) {
    const auto line = next_line();
    if (line.empty() || line.front() == '#') continue;
    const char* q = line.data();
    const char* const line_end = q + line.size();
    for (std::size_t c = 0; c < cols; ++c) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(q, line_end, v);
      if (ec != std::errc{}) {
        throw FormatError("csv", source + ":" + std::to_string(line_no) + ": bad number in column " +
                                     table.header[c]);
      }
      q = ptr;
      if (c + 1 < cols) {
        if (q >= line_end || *q != ',') {
          throw FormatError("csv", source + ":" + std::to_string(line_no) + ": expected " +
                                       std::to_string(cols) + " columns");
        }
        ++q;
      }
      table.values.data.push_back(v);
    }
    if (q != line_end) {
      throw FormatError("csv", source + ":" + std::to_string(line_no) + ": trailing data");
    }
    ++table.values.rows;
  }
  return table;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("csv", "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

std::string format_double(double v) {
  std::string s;
  append_double(s, v);
  return s;
}

std::string format(const Table& table) {
  std::string out;
  out.reserve(table.values.data.size() * 12 + 256);
  for (const auto& c : table.comments) out += "# " + c + "\n";
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out += ',';
    out += table.header[i];
  }
  out += '\n';
  for (std::size_t r = 0; r < table.values.rows; ++r) {
    for (std::size_t c = 0; c < table.values.cols; ++c) {
      if (c) out += ',';
      append_double(out, table.values(r, c));
    }
    out += '\n';
  }
  return out;
}

void write(const std::filesystem::path& path, const Table& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("csv", "cannot write '" + path.string() + "'");
  const auto text = format(table);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw FormatError("csv", "write failed for '" + path.string() + "'");
}

}  // namespace dpars::csv
