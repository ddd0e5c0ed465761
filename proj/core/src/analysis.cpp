#include "ssrguard/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <set>

#include "ssrguard/error.hpp"
#include "ssrguard/io.hpp"

namespace ssrguard {

VectorForm parse_vector_form(const std::string& text) {
  if (text == "rectangular") return VectorForm::Rectangular;
  if (text == "phasor") return VectorForm::Phasor;
  throw InvalidArgument("unknown vector form '" + text + "' (rectangular | phasor)");
}

Linkage parse_linkage(const std::string& text) {
  if (text == "average") return Linkage::Average;
  if (text == "single") return Linkage::Single;
  if (text == "complete") return Linkage::Complete;
  throw InvalidArgument("unknown linkage '" + text + "' (average | single | complete)");
}

Metric parse_metric(const std::string& text) {
  if (text == "euclidean") return Metric::Euclidean;
  if (text == "manhattan") return Metric::Manhattan;
  throw InvalidArgument("unknown metric '" + text + "' (euclidean | manhattan)");
}

std::vector<ImpedanceVector> impedance_vectors(const ImpedanceDataset& dataset, VectorForm form,
                                               bool standardize) {
  std::map<std::pair<double, double>, const ImpedancePoint*> cells;
  std::set<double> workloads;
  std::set<double> freqs;
  for (const ImpedancePoint& p : dataset.points) {
    cells[{p.p_load, p.f_hz}] = &p;
    workloads.insert(p.p_load);
    freqs.insert(p.f_hz);
  }
  std::string missing;
  std::size_t n_missing = 0;
  for (double w : workloads) {
    for (double f : freqs) {
      if (!cells.contains({w, f})) {
        if (n_missing++ < 10) missing += " (" + format_double(w) + " W, " + format_double(f) + " Hz)";
      }
    }
  }
  if (n_missing > 0) {
    throw InvalidArgument("dataset is not a complete workload x frequency grid; " +
                          std::to_string(n_missing) + " missing cells:" + missing +
                          (n_missing > 10 ? " ..." : ""));
  }

  std::vector<ImpedanceVector> out;
  for (double w : workloads) {
    ImpedanceVector v{w, form, {}};
    for (double f : freqs) {
      const ImpedancePoint& p = *cells.at({w, f});
      if (form == VectorForm::Rectangular) {
        v.values.push_back(p.re);
        v.values.push_back(p.im);
      } else {
        v.values.push_back(p.magnitude());
        v.values.push_back(p.phase());
      }
    }
    out.push_back(std::move(v));
  }
  if (standardize && !out.empty()) {
    const std::size_t dims = out.front().values.size();
    const double n = static_cast<double>(out.size());
    for (std::size_t d = 0; d < dims; ++d) {
      double mean = 0.0;
      for (const auto& v : out) mean += v.values[d];
      mean /= n;
      double var = 0.0;
      for (const auto& v : out) var += (v.values[d] - mean) * (v.values[d] - mean);
      const double sd = std::sqrt(var / n);
      for (auto& v : out) v.values[d] = sd > 0.0 ? (v.values[d] - mean) / sd : 0.0;
    }
  }
  return out;
}

std::vector<std::size_t> Dendrogram::members(std::size_t cluster) const {
  if (cluster < leaves) return {cluster};
  const std::size_t k = cluster - leaves;
  if (k >= merges.size()) throw InvalidArgument("unknown cluster id " + std::to_string(cluster));
  auto a = members(merges[k].a);
  const auto b = members(merges[k].b);
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  return a;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> Dendrogram::top_split() const {
  if (merges.empty()) throw InvalidArgument("dendrogram has no merges");
  return {members(merges.back().a), members(merges.back().b)};
}

Dendrogram hierarchical_cluster(const std::vector<ImpedanceVector>& vectors, Linkage linkage,
                                Metric metric) {
  const std::size_t n = vectors.size();
  if (n < 2) throw InvalidArgument("clustering needs at least two vectors");
  for (const auto& v : vectors) {
    if (v.values.size() != vectors.front().values.size()) {
      throw InvalidArgument("impedance vectors have different lengths");
    }
  }
  // Cluster-to-cluster distances, indexed by cluster id; only active ids are read.
  const std::size_t total = 2 * n - 1;
  std::vector<std::vector<double>> d(total, std::vector<double>(total, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < vectors[i].values.size(); ++k) {
        const double diff = vectors[i].values[k] - vectors[j].values[k];
        s += metric == Metric::Euclidean ? diff * diff : std::abs(diff);
      }
      d[i][j] = d[j][i] = metric == Metric::Euclidean ? std::sqrt(s) : s;
    }
  }
  std::vector<std::size_t> active(n);
  std::vector<std::size_t> size(total, 1);
  for (std::size_t i = 0; i < n; ++i) active[i] = i;

  Dendrogram dg;
  dg.leaves = n;
  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t ba = 0;
    std::size_t bb = 0;
    double best = std::numeric_limits<double>::infinity();
    // `active` stays sorted, so the first strict minimum is the lowest id pair.
    for (std::size_t x = 0; x < active.size(); ++x) {
      for (std::size_t y = x + 1; y < active.size(); ++y) {
        const double v = d[active[x]][active[y]];
        if (v < best) {
          best = v;
          ba = active[x];
          bb = active[y];
        }
      }
    }
    const std::size_t id = n + step;
    size[id] = size[ba] + size[bb];
    for (std::size_t c : active) {
      if (c == ba || c == bb) continue;
      double v = 0.0;
      switch (linkage) {
        case Linkage::Single: v = std::min(d[ba][c], d[bb][c]); break;
        case Linkage::Complete: v = std::max(d[ba][c], d[bb][c]); break;
        case Linkage::Average:
          v = (static_cast<double>(size[ba]) * d[ba][c] + static_cast<double>(size[bb]) * d[bb][c]) /
              static_cast<double>(size[id]);
          break;
      }
      d[id][c] = d[c][id] = v;
    }
    std::erase_if(active, [&](std::size_t c) { return c == ba || c == bb; });
    active.push_back(id);
    dg.merges.push_back({ba, bb, best, size[id]});
  }
  return dg;
}

std::vector<double> detect_dips(const std::vector<ImpedancePoint>& curve, double f_lo, double f_hi) {
  std::vector<double> out;
  for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
    const double f = curve[i].f_hz;
    if (f < f_lo || f > f_hi) continue;
    const double m = curve[i].magnitude();
    if (m < curve[i - 1].magnitude() && m < curve[i + 1].magnitude()) out.push_back(f);
  }
  return out;
}

void write_bode_csv(std::ostream& out, const std::vector<ImpedancePoint>& curve) {
  out << "f_hz,mag_ohm,phase_deg\n";
  for (const ImpedancePoint& p : curve) {
    out << format_double(p.f_hz) << ',' << format_double(p.magnitude()) << ','
        << format_double(p.phase() * 180.0 / std::numbers::pi) << '\n';
  }
}

void write_nyquist_csv(std::ostream& out, const std::vector<ImpedancePoint>& curve) {
  out << "f_hz,re,im\n";
  for (const ImpedancePoint& p : curve) {
    out << format_double(p.f_hz) << ',' << format_double(p.re) << ',' << format_double(p.im) << '\n';
  }
}

void write_margin_demo_csv(std::ostream& out, const GridModel& grid, const ImpedanceProvider& provider,
                           const MarginReport& report, const std::vector<double>& frequencies_hz) {
  if (frequencies_hz.empty()) throw InvalidArgument("margin demo needs at least one frequency");
  const auto row = [&](double f_hz, double w, int marker) {
    const std::complex<double> g = open_loop_gain(grid, provider(w, report.p_load), w);
    out << format_double(f_hz) << ',' << format_double(g.real()) << ',' << format_double(g.imag())
        << ',' << marker << '\n';
  };
  out << "f_hz,re,im,marker\n";
  for (double f : frequencies_hz) {
    if (!(f > 0.0)) throw InvalidArgument("margin demo frequencies must be > 0");
    row(f, 2.0 * std::numbers::pi * f, 0);
  }
  row(report.w_vul / (2.0 * std::numbers::pi), report.w_vul, 1);
}

void write_margin_scan_csv(std::ostream& out, const std::vector<ScanPoint>& scan) {
  out << "p_load_w,m_bar\n";
  for (const ScanPoint& s : scan) out << format_double(s.p_load) << ',' << format_double(s.m_bar) << '\n';
}

void write_dendrogram_csv(std::ostream& out, const Dendrogram& dendrogram) {
  out << "step,a,b,dist,size\n";
  for (std::size_t k = 0; k < dendrogram.merges.size(); ++k) {
    const Merge& m = dendrogram.merges[k];
    out << k << ',' << m.a << ',' << m.b << ',' << format_double(m.distance) << ',' << m.size << '\n';
  }
}

}  // namespace ssrguard
