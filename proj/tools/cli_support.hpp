#pragma once

// Plumbing shared by the subcommands: JSON config files, manifests, output
// files and the exit-code contract.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cbal/params.hpp"

namespace cbal::cli {

using ojson = nlohmann::ordered_json;

enum Exit : int { ok = 0, validation = 2, divergence = 3, io = 4 };

/// Raised for file-system trouble so main can map it to the I/O exit code.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Run ended with a diverged model and --allow-divergence was not given.
class DivergedRun : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads JSON config files for CLI11. Top-level keys apply to the active
/// subcommand; an object under a subcommand name applies to that one. A
/// manifest written by this tool is accepted as-is (its "parameters").
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(std::string active) : active_(std::move(active)) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    throw CLI::ConfigError("writing config files is not supported");
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    ojson j;
    try {
      j = ojson::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    if (j.contains("parameters") && j.contains("command")) {
      if (j["command"] != active_)
        throw CLI::ConversionError("manifest belongs to '" + j["command"].get<std::string>() + "'");
      j = j["parameters"];
    }
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        if (key != active_) continue;  // settings for another subcommand
        for (const auto& [k, v] : value.items())
          if (!unset(v)) items.push_back(item(k, v));
      } else if (!unset(value)) {
        items.push_back(item(key, value));
      }
    }
    return items;
  }

 private:
  static bool unset(const ojson& v) { return v.is_null() || (v.is_array() && v.empty()); }
  CLI::ConfigItem item(std::string key, const ojson& v) const {
    for (char& c : key)
      if (c == '_') c = '-';
    CLI::ConfigItem it;
    it.parents = {active_};
    it.name = key;
    auto scalar = [](const ojson& x) { return x.is_string() ? x.get<std::string>() : x.dump(); };
    if (v.is_array())
      for (const auto& e : v) it.inputs.push_back(scalar(e));
    else
      it.inputs.push_back(scalar(v));
    return it;
  }
  std::string active_;
};

/// Every option of `sub` with its resolved value (given or default).
inline ojson resolved_options(const CLI::App& sub) {
  ojson out = ojson::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    std::vector<std::string> values;
    if (opt->count() > 0) {
      values = opt->as<std::vector<std::string>>();
    } else if (!opt->get_default_str().empty() && opt->get_default_str() != "{}" &&
               opt->get_default_str() != "[]") {
      values = {opt->get_default_str()};
    }
    auto typed = [](const std::string& s) -> ojson {
      if (s == "true") return true;
      if (s == "false") return false;
      try {
        std::size_t used = 0;
        const double d = std::stod(s, &used);
        if (used == s.size()) {
          if (s.find_first_of(".eE") == std::string::npos) {
            const long long i = std::stoll(s);
            return i;
          }
          return d;
        }
      } catch (const std::exception&) {
      }
      return s;
    };
    std::string key = name;
    for (char& c : key)
      if (c == '-') c = '_';
    if (opt->get_expected_max() > 1) {
      ojson arr = ojson::array();
      for (const auto& v : values) arr.push_back(typed(v));
      out[key] = arr;
    } else if (opt->get_expected_max() == 0) {
      // a flag read from a config file may hold "false"
      out[key] = opt->count() > 0 && CLI::detail::to_flag_value(opt->results().back()) > 0;
    } else {
      out[key] = values.empty() ? ojson(nullptr) : typed(values.back());
    }
  }
  return out;
}

inline ojson params_json(const ModelParams& p) {
  return ojson{{"gamma", p.gamma}, {"alpha", p.alpha}, {"beta", p.beta}, {"nu", p.nu},
               {"tau", p.tau},     {"dt", p.dt},       {"seed", p.seed}};
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

/// Converts CSV text produced by cbal::csv into JSON lines.
inline std::string csv_to_jsonl(const std::string& csv) {
  std::istringstream in(csv);
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cell += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          cell += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        cells.push_back(std::move(cell));
        cell.clear();
      } else {
        cell += c;
      }
    }
    cells.push_back(std::move(cell));
    return cells;
  };
  std::string line, out;
  if (!std::getline(in, line)) return out;
  const auto header = split(line);
  while (std::getline(in, line)) {
    const auto cells = split(line);
    ojson row = ojson::object();
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) {
      const std::string& c = cells[i];
      if (c.empty()) {
        row[header[i]] = nullptr;
        continue;
      }
      char* end = nullptr;
      const double d = std::strtod(c.c_str(), &end);
      if (end == c.c_str() + c.size() && c != "nan" && c != "inf" && c != "-inf")
        row[header[i]] = d;
      else
        row[header[i]] = c;
    }
    out += row.dump() + "\n";
  }
  return out;
}

}  // namespace cbal::cli
