#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "etd/errors.hpp"

namespace etd {

inline constexpr int kSeriesLength = 365;

/// One user's labeled year of daily consumption. Masked readings carry no
/// information; they are NaN in memory and empty cells on disk.
struct ConsumptionRecord {
    std::string user_id;
    int label = 0;  // 0 = normal, 1 = theft
    std::vector<double> readings;      // exactly kSeriesLength values
    std::vector<std::uint8_t> missing; // parallel mask

    ConsumptionRecord()
        : readings(kSeriesLength, 0.0), missing(kSeriesLength, 0) {}

    int observed_count() const {
        int n = 0;
        for (std::uint8_t m : missing) n += m ? 0 : 1;
        return n;
    }
};

enum class Provenance { kSynthetic, kExternalCsv };

struct GeneratorParams {
    int n_users = 0;
    double theft_fraction = 0.0;
    double p_missing = 0.0;
    std::uint64_t seed = 0;
};

struct Dataset {
    std::vector<ConsumptionRecord> records;
    Provenance provenance = Provenance::kExternalCsv;
    GeneratorParams generator;  // meaningful for synthetic datasets only

    std::vector<int> labels() const {
        std::vector<int> y;
        y.reserve(records.size());
        for (const auto& r : records) y.push_back(r.label);
        return y;
    }
};

/// CSV contract: header `user_id,label,d001,...,d365`; empty cell or NaN
/// marks a missing reading. Raises parse_error naming the offending row.
Dataset load_csv(const std::string& path);

/// Writes the same CSV format; missing readings become empty cells.
void save_csv(const Dataset& ds, const std::string& path);

/// Fills every masked reading by barycentric Lagrange interpolation through
/// the four nearest observed days (two per side where available, one-sided
/// at the series edges). Needs at least four observed readings, otherwise
/// raises data_error. Observed values are never modified.
ConsumptionRecord impute_missing(const ConsumptionRecord& r);

/// Per-series standardization to mean 0 and (population) variance 1.
/// The record must already be imputed; a zero-variance series raises
/// data_error so the caller can exclude it.
ConsumptionRecord zscore(const ConsumptionRecord& r);

/// Synthetic smart-meter population: weekly plus annual sinusoidal usage
/// with Gaussian noise, and for theft users one of three post-onset
/// patterns (downscaling, zeroed days, capped peaks). Deterministic for a
/// fixed seed.
Dataset generate_synthetic(int n_users, double theft_fraction, double p_missing,
                           std::uint64_t seed);

/// JSON sidecar recording the generator parameters next to a written CSV.
void write_dataset_sidecar(const Dataset& ds, const std::string& csv_path);

} // namespace etd
