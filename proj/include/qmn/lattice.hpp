#pragma once

// 4H-SiC supercell generation and stochastic isotope placement around a
// silicon vacancy sitting at the origin.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qmn/linalg.hpp"

namespace qmn {

enum class Element { Si, C };

enum class Species { C13, Si29 };

/// Gyromagnetic ratio in Hz/T (signed).
constexpr double gyromagnetic_ratio(Species s) {
  return s == Species::C13 ? 10.71e6 : -8.46e6;
}

inline std::string_view to_string(Species s) { return s == Species::C13 ? "C13" : "Si29"; }
inline std::string_view to_string(Element e) { return e == Element::C ? "C" : "Si"; }

inline Species species_from_string(std::string_view s) {
  if (s == "C13" || s == "13C") return Species::C13;
  if (s == "Si29" || s == "29Si") return Species::Si29;
  throw std::invalid_argument("unknown nuclear species '" + std::string(s) + "'");
}

struct BasisAtom {
  Vec3 fractional;
  Element element;
};

/// Hexagonal 4H-SiC cell. Defaults are the room-temperature lattice constants
/// (nm) and the ABCB stacking sequence with the C sublattice displaced by
/// u = 3/16 along c.
struct LatticeSpec {
  double a = 0.3073;
  double b = 0.3073;
  double c = 1.0053;
  double alpha_deg = 90.0;
  double beta_deg = 90.0;
  double gamma_deg = 120.0;
  std::vector<BasisAtom> basis = default_basis();

  static std::vector<BasisAtom> default_basis() {
    constexpr double u = 3.0 / 16.0;
    const std::array<Vec3, 4> si = {Vec3(0.0, 0.0, 0.0), Vec3(1.0 / 3.0, 2.0 / 3.0, 0.25),
                                    Vec3(2.0 / 3.0, 1.0 / 3.0, 0.5),
                                    Vec3(1.0 / 3.0, 2.0 / 3.0, 0.75)};
    std::vector<BasisAtom> out;
    for (const auto& p : si) out.push_back({p, Element::Si});
    for (const auto& p : si) out.push_back({p + Vec3(0.0, 0.0, u), Element::C});
    return out;
  }

  void validate() const {
    if (!(a > 0 && b > 0 && c > 0)) throw std::invalid_argument("lattice constants must be positive");
    int n_si = 0, n_c = 0;
    for (const auto& atom : basis) {
      for (int i = 0; i < 3; ++i)
        if (atom.fractional(i) < 0.0 || atom.fractional(i) >= 1.0)
          throw std::invalid_argument("basis fractional coordinates must lie in [0,1)");
      (atom.element == Element::Si ? n_si : n_c)++;
    }
    if (n_si != 4 || n_c != 4) throw std::invalid_argument("4H basis needs exactly 4 Si and 4 C atoms");
  }

  Vec3 a1() const { return Vec3(a, 0.0, 0.0); }
  Vec3 a2() const {
    const double g = gamma_deg * std::numbers::pi / 180.0;
    return Vec3(b * std::cos(g), b * std::sin(g), 0.0);
  }
  Vec3 a3() const { return Vec3(0.0, 0.0, c); }

  /// a^2 c sin(gamma), nm^3
  double cell_volume() const { return a1().cross(a2()).dot(a3()); }

  Vec3 cartesian(const Vec3& frac) const {
    return frac.x() * a1() + frac.y() * a2() + frac.z() * a3();
  }
};

struct Site {
  Vec3 position;  // nm
  Element element;
};

inline double cube_half_side(double volume_nm3) { return 0.5 * std::cbrt(volume_nm3); }

inline bool inside_cube(const Vec3& p, double half) {
  return std::abs(p.x()) <= half && std::abs(p.y()) <= half && std::abs(p.z()) <= half;
}

/// Every lattice site inside an axis-aligned cube of the given volume centred
/// on the origin. The Si site of cell (0,0,0) sits exactly at the origin.
inline std::vector<Site> generate_supercell(const LatticeSpec& spec, double volume_nm3) {
  spec.validate();
  if (!(volume_nm3 > 0.0)) throw std::invalid_argument("supercell volume must be positive");
  if (volume_nm3 < spec.cell_volume())
    throw std::invalid_argument("supercell volume is smaller than one unit cell");

  const double half = cube_half_side(volume_nm3);
  const Vec3 a1 = spec.a1(), a2 = spec.a2(), a3 = spec.a3();
  // Fractional extent that safely bounds the cube for a hexagonal cell.
  const int n12 = static_cast<int>(std::ceil(2.0 * half / (spec.a * std::sin(spec.gamma_deg * std::numbers::pi / 180.0)))) + 2;
  const int n3 = static_cast<int>(std::ceil(half / spec.c)) + 1;

  std::vector<Site> sites;
  sites.reserve(static_cast<std::size_t>(8.0 * volume_nm3 / spec.cell_volume() * 1.05) + 16);
  for (int i = -n12; i <= n12; ++i)
    for (int j = -n12; j <= n12; ++j)
      for (int k = -n3; k <= n3; ++k) {
        const Vec3 origin = i * a1 + j * a2 + k * a3;
        for (const auto& atom : spec.basis) {
          const Vec3 p = origin + spec.cartesian(atom.fractional);
          if (inside_cube(p, half)) sites.push_back({p, atom.element});
        }
      }
  return sites;
}

/// Number of whole unit cells the volume corresponds to.
inline double unit_cell_count(const LatticeSpec& spec, double volume_nm3) {
  return volume_nm3 / spec.cell_volume();
}

struct IsotopeConfig {
  double c13_fraction = 0.011;
  double si29_fraction = 0.047;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(c13_fraction >= 0.0 && c13_fraction <= 1.0) || !(si29_fraction >= 0.0 && si29_fraction <= 1.0))
      throw std::invalid_argument("isotope fractions must lie in [0,1]");
  }
};

/// Total isotope concentration -> (13C, 29Si) fractions. Both grow together
/// until 13C reaches its natural abundance, after which only 29Si grows.
inline std::pair<double, double> concentration_split(double total, double c13_natural = 0.011) {
  if (total < 0.0) throw std::invalid_argument("concentration must be non-negative");
  if (total <= 2.0 * c13_natural) return {0.5 * total, 0.5 * total};
  return {c13_natural, total - c13_natural};
}

struct NuclearSpin {
  Vec3 position;  // nm, relative to the defect
  Species species;
  double gamma_n;  // Hz/T
};

inline NuclearSpin make_spin(Species s, const Vec3& position) {
  return {position, s, gyromagnetic_ratio(s)};
}

struct SpinBath {
  std::vector<NuclearSpin> spins;
  double volume = 0.0;  // nm^3
  std::uint64_t seed = 0;

  std::size_t size() const { return spins.size(); }
  bool empty() const { return spins.empty(); }
};

inline constexpr double kVacancyTolerance = 1e-9;

/// Bernoulli isotope placement over all sites except the vacancy at the origin.
inline SpinBath sample_bath(const std::vector<Site>& sites, const IsotopeConfig& config,
                            double volume_nm3 = 0.0) {
  config.validate();
  if (sites.empty()) throw std::invalid_argument("cannot sample a bath from an empty site list");
  std::mt19937_64 rng(config.rng_seed);
  std::bernoulli_distribution c13(config.c13_fraction);
  std::bernoulli_distribution si29(config.si29_fraction);

  SpinBath bath;
  bath.volume = volume_nm3;
  bath.seed = config.rng_seed;
  for (const auto& site : sites) {
    // One draw per site keeps realisations aligned across concentrations.
    const bool hit = site.element == Element::C ? c13(rng) : si29(rng);
    if (site.position.norm() < kVacancyTolerance) continue;
    if (hit) bath.spins.push_back(make_spin(site.element == Element::C ? Species::C13 : Species::Si29, site.position));
  }
  return bath;
}

struct BathStatistics {
  std::size_t c13_count = 0;
  std::size_t si29_count = 0;
  std::vector<double> nearest_neighbor_nm;  // per spin
  std::vector<double> distance_to_origin_nm;  // per spin

  double mean_nearest_neighbor() const { return mean(nearest_neighbor_nm); }
  double min_distance_to_origin() const {
    return distance_to_origin_nm.empty() ? std::numeric_limits<double>::quiet_NaN()
                                         : *std::min_element(distance_to_origin_nm.begin(), distance_to_origin_nm.end());
  }

  static double mean(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }
};

inline BathStatistics bath_statistics(const SpinBath& bath) {
  BathStatistics st;
  const std::size_t n = bath.size();
  st.distance_to_origin_nm.reserve(n);
  for (const auto& s : bath.spins) {
    (s.species == Species::C13 ? st.c13_count : st.si29_count)++;
    st.distance_to_origin_nm.push_back(s.position.norm());
  }
  if (n >= 2) {
    st.nearest_neighbor_nm.assign(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double d = (bath.spins[i].position - bath.spins[j].position).norm();
        st.nearest_neighbor_nm[i] = std::min(st.nearest_neighbor_nm[i], d);
        st.nearest_neighbor_nm[j] = std::min(st.nearest_neighbor_nm[j], d);
      }
  }
  return st;
}

// -- serialization ----------------------------------------------------------

inline nlohmann::json bath_to_json(const SpinBath& bath) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : bath.spins)
    arr.push_back({{"species", to_string(s.species)},
                   {"x_nm", s.position.x()},
                   {"y_nm", s.position.y()},
                   {"z_nm", s.position.z()}});
  return arr;
}

inline SpinBath bath_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw std::invalid_argument("bath JSON must be an array");
  SpinBath bath;
  for (const auto& e : arr) {
    const Vec3 p(e.at("x_nm").get<double>(), e.at("y_nm").get<double>(), e.at("z_nm").get<double>());
    bath.spins.push_back(make_spin(species_from_string(e.at("species").get<std::string>()), p));
  }
  return bath;
}

}  // namespace qmn
