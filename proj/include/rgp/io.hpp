#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rgp/errors.hpp"
#include "rgp/gp.hpp"
#include "rgp/terminal.hpp"

namespace rgp {

/// Plain-text training set: header "n n_w", then one row per point with the
/// regressor followed by the output.
inline void saveTrainingSet(const TrainingSet& d, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  const int nw = d.size() ? static_cast<int>(d.regressors[0].size()) : 0;
  f.precision(17);
  f << d.size() << " " << nw << "\n";
  for (int i = 0; i < d.size(); ++i) {
    for (int j = 0; j < nw; ++j) f << d.regressors[i](j) << " ";
    f << d.outputs[i] << "\n";
  }
}

inline TrainingSet loadTrainingSet(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  int n = 0, nw = 0;
  f >> n >> nw;
  TrainingSet d;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd w(nw);
    for (int j = 0; j < nw; ++j) f >> w(j);
    double z;
    f >> z;
    d.add(w, z);
  }
  if (!f) throw std::runtime_error("truncated training set: " + path);
  return d;
}

inline void saveHyperparameters(const Hyperparameters& th,
                                const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.precision(17);
  f << "c=" << th.c << "\n";
  f << "lengthscales=";
  for (int i = 0; i < th.lengthscales.size(); ++i)
    f << th.lengthscales(i) << (i + 1 < th.lengthscales.size() ? " " : "");
  f << "\n";
  f << "sigma_f2=" << th.sigma_f2 << "\n";
  f << "sigma_n2=" << th.sigma_n2 << "\n";
}

inline Hyperparameters loadHyperparameters(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  Hyperparameters th;
  std::string line;
  while (std::getline(f, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "c") th.c = std::stod(val);
    else if (key == "sigma_f2") th.sigma_f2 = std::stod(val);
    else if (key == "sigma_n2") th.sigma_n2 = std::stod(val);
    else if (key == "lengthscales") {
      std::istringstream ss(val);
      std::vector<double> ls;
      double x;
      while (ss >> x) ls.push_back(x);
      th.lengthscales = Eigen::Map<Eigen::VectorXd>(ls.data(), ls.size());
    }
  }
  th.validate();
  return th;
}

inline void saveTerminalPair(const TerminalPair& tp,
                             const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.precision(17);
  f << "k=";
  for (int i = 0; i < tp.k.size(); ++i)
    f << tp.k(i) << (i + 1 < tp.k.size() ? " " : "\n");
  for (int i = 0; i < tp.P.rows(); ++i) {
    f << "P" << i << "=";
    for (int j = 0; j < tp.P.cols(); ++j)
      f << tp.P(i, j) << (j + 1 < tp.P.cols() ? " " : "\n");
  }
}

inline TerminalPair loadTerminalPair(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  TerminalPair tp;
  std::map<std::string, std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::istringstream ss(line.substr(eq + 1));
    std::vector<double> vals;
    double x;
    while (ss >> x) vals.push_back(x);
    rows[line.substr(0, eq)] = vals;
  }
  const auto& k = rows.at("k");
  const int n = static_cast<int>(k.size());
  tp.k = Eigen::Map<const Eigen::VectorXd>(k.data(), n);
  tp.P.resize(n, n);
  for (int i = 0; i < n; ++i) {
    const auto& r = rows.at("P" + std::to_string(i));
    for (int j = 0; j < n; ++j) tp.P(i, j) = r[j];
  }
  tp.G = tp.P.inverse();
  tp.s = tp.G * tp.k;
  return tp;
}

/// key=value configuration with [section] headers; keys are stored as
/// "section.key" ("" section for keys before any header).
class Config {
 public:
  static Config fromFile(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read config " + path);
    Config c;
    std::string line, section;
    while (std::getline(f, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[' && line.back() == ']') {
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key =
          (section.empty() ? "" : section + ".") + trim(line.substr(0, eq));
      c.values_[key] = trim(line.substr(eq + 1));
    }
    return c;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }
  double num(const std::string& key, double dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : std::stod(it->second);
  }
  long integer(const std::string& key, long dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : std::stol(it->second);
  }

  const std::map<std::string, std::string>& all() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Minimal CSV writer: header once, then value rows.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& cols)
      : f_(path) {
    if (!f_) throw std::runtime_error("cannot write " + path);
    f_.precision(12);
    for (size_t i = 0; i < cols.size(); ++i)
      f_ << cols[i] << (i + 1 < cols.size() ? "," : "\n");
  }

  void row(const std::vector<double>& vals) {
    for (size_t i = 0; i < vals.size(); ++i)
      f_ << vals[i] << (i + 1 < vals.size() ? "," : "\n");
  }

  void rowMixed(const std::vector<std::string>& vals) {
    for (size_t i = 0; i < vals.size(); ++i)
      f_ << vals[i] << (i + 1 < vals.size() ? "," : "\n");
  }

 private:
  std::ofstream f_;
};

inline std::uint64_t fnv1aFile(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot hash " + path);
  std::uint64_t h = 1469598103934665603ull;
  char c;
  while (f.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

/// Sidecar metadata next to a CSV: config echo, seeds, content hash.
inline void writeSidecar(const std::string& csvPath,
                         const std::map<std::string, std::string>& config,
                         const std::vector<std::uint64_t>& seeds) {
  std::ofstream f(csvPath + ".meta");
  if (!f) throw std::runtime_error("cannot write sidecar for " + csvPath);
  for (const auto& [k, v] : config) f << k << "=" << v << "\n";
  f << "seeds=";
  for (size_t i = 0; i < seeds.size(); ++i)
    f << seeds[i] << (i + 1 < seeds.size() ? " " : "");
  f << "\n";
  f << "content_hash=" << fnv1aFile(csvPath) << "\n";
}

}  // namespace rgp
