#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tvws {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Power value used for "no emission": zero linear power.
constexpr double kFloorDbm = -kInf;

struct Point {
  double x_m = 0.0;
  double y_m = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.x_m - b.x_m, a.y_m - b.y_m); }

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

inline double linear_to_db(double linear) {
  return linear > 0.0 ? 10.0 * std::log10(linear) : kFloorDbm;
}

/// SplitMix64 finalizer. Derives independent substream seeds from (seed, stream)
/// so Monte Carlo trials can run in any order and still draw the same numbers.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Error hierarchy. Every failure the library reports is one of these.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AlignmentError : public Error { using Error::Error; };
class ResolutionError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class CoverageError : public Error { using Error::Error; };
class RangeError : public Error { using Error::Error; };
class CalibrationError : public Error { using Error::Error; };
class DegenerateContourError : public Error { using Error::Error; };
class ValidationError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class StaleSensingError : public Error { using Error::Error; };
class AddressingError : public Error { using Error::Error; };
class AggregationError : public Error { using Error::Error; };
class InsufficientDataError : public Error { using Error::Error; };
class StartupError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Text helpers shared by the CSV readers and writers.

/// Shortest decimal that round-trips to the same double ("inf", "-inf", "nan" for specials).
std::string format_double(double value);

/// Strict parse: the whole field must be a number (accepts "inf"/"-inf").
double parse_double(std::string_view text);
std::int64_t parse_int(std::string_view text);

std::string_view trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);

/// Reads a text file into lines, stripping a trailing CR from each line.
std::vector<std::string> read_lines(const std::string& path);

}  // namespace tvws
