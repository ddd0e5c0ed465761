#pragma once

// Post-hoc analyses over swept impedance data and plot-ready exports.

#include <iosfwd>
#include <string>
#include <vector>

#include "ssrguard/control.hpp"
#include "ssrguard/grid_stability.hpp"
#include "ssrguard/sweep.hpp"

namespace ssrguard {

enum class VectorForm { Rectangular, Phasor };
VectorForm parse_vector_form(const std::string& text);

struct ImpedanceVector {
  double p_load = 0.0;
  VectorForm form = VectorForm::Rectangular;
  std::vector<double> values;  // per frequency: (Re, Im) or (|Z|, angle Z), in grid order
};

/// One vector per workload, ordered by workload. With `standardize`, every
/// dimension is shifted and scaled to zero mean and unit population variance
/// across the vectors (constant dimensions become 0).
std::vector<ImpedanceVector> impedance_vectors(const ImpedanceDataset& dataset, VectorForm form,
                                               bool standardize = true);

enum class Linkage { Single, Complete, Average };
enum class Metric { Euclidean, Manhattan };
Linkage parse_linkage(const std::string& text);
Metric parse_metric(const std::string& text);

struct Merge {
  std::size_t a = 0;    // cluster ids: leaves 0..n-1, merge k creates id n+k
  std::size_t b = 0;
  double distance = 0.0;
  std::size_t size = 0;
};

struct Dendrogram {
  std::size_t leaves = 0;
  std::vector<Merge> merges;

  /// Leaf indices under a cluster id.
  std::vector<std::size_t> members(std::size_t cluster) const;
  /// The two clusters joined by the final merge.
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> top_split() const;
};

/// Agglomerative clustering; ties are broken by the lowest (a, b) cluster ids.
Dendrogram hierarchical_cluster(const std::vector<ImpedanceVector>& vectors,
                                Linkage linkage = Linkage::Average, Metric metric = Metric::Euclidean);

/// Frequencies (Hz) of points inside [f_lo, f_hi] whose magnitude is strictly
/// below both neighbours on the curve. The curve must be sorted by frequency.
std::vector<double> detect_dips(const std::vector<ImpedancePoint>& curve, double f_lo, double f_hi);

void write_bode_csv(std::ostream& out, const std::vector<ImpedancePoint>& curve);
void write_nyquist_csv(std::ostream& out, const std::vector<ImpedancePoint>& curve);
/// Open-loop gain Z_grid^-1 Z_gcdc along `frequencies_hz`, then one marker row
/// at the vulnerable frequency. Columns `f_hz,re,im,marker`.
void write_margin_demo_csv(std::ostream& out, const GridModel& grid, const ImpedanceProvider& provider,
                           const MarginReport& report, const std::vector<double>& frequencies_hz);
void write_margin_scan_csv(std::ostream& out, const std::vector<ScanPoint>& scan);
void write_dendrogram_csv(std::ostream& out, const Dendrogram& dendrogram);

}  // namespace ssrguard
