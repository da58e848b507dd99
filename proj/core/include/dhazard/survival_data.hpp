#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dhazard/random.hpp"

namespace dhazard {

enum class CovariateKind { continuous, categorical };

struct CovariateInfo {
  std::string name;
  CovariateKind kind = CovariateKind::continuous;
  // Level labels for categorical covariates; record values hold the level index.
  std::vector<std::string> levels;
};

// One subject. `time` is the index of the last interval at risk, min(T, C, k).
struct IndividualRecord {
  std::string id;
  int time = 1;
  int event = 0;
  std::vector<double> covariates;

  bool operator==(const IndividualRecord&) const = default;
};

// Person-level data set: records share one covariate layout.
struct PersonData {
  std::vector<CovariateInfo> covariates;
  std::vector<IndividualRecord> records;

  std::optional<std::size_t> covariate_index(std::string_view name) const;
  int max_time() const;
};

// Checks time >= 1, event in {0, 1} and covariate vector length; throws
// ValidationError naming the offending record.
void validate(const PersonData& data);

// Records with time > k become (time = k, event = 0).
PersonData truncate_to_horizon(PersonData data, int horizon);

struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

// Person-period form of a PersonData set. Individual i owns the contiguous
// rows block(i); its rows carry t = 1..t_i and y = 1 only on the last row when
// the event was observed. Covariates are stored once per individual.
class AugmentedDataset {
 public:
  AugmentedDataset() = default;

  std::size_t total_rows() const { return row_individual_.size(); }
  std::size_t num_individuals() const { return ids_.size(); }
  int horizon() const { return horizon_; }
  int max_time() const { return max_time_; }

  RowRange block(std::size_t individual) const {
    return {offsets_[individual], offsets_[individual + 1]};
  }
  int observed_time(std::size_t individual) const {
    return static_cast<int>(offsets_[individual + 1] - offsets_[individual]);
  }
  int event(std::size_t individual) const { return events_[individual]; }
  const std::string& id(std::size_t individual) const { return ids_[individual]; }

  std::uint32_t row_individual(std::size_t row) const { return row_individual_[row]; }
  int row_time(std::size_t row) const { return row_time_[row]; }
  int row_y(std::size_t row) const { return row_y_[row]; }
  std::span<const std::uint8_t> y() const { return row_y_; }

  const std::vector<CovariateInfo>& covariates() const { return covariate_info_; }
  double covariate(std::size_t individual, std::size_t column) const {
    return values_[column * ids_.size() + individual];
  }
  // All individuals' values for one covariate.
  std::span<const double> covariate_column(std::size_t column) const {
    return {values_.data() + column * ids_.size(), ids_.size()};
  }

  // Number of at-risk rows at each time 1..k (index t - 1).
  const std::vector<std::size_t>& rows_per_time() const { return rows_per_time_; }

 private:
  friend AugmentedDataset augment(const PersonData& data, int horizon);

  int horizon_ = 0;
  int max_time_ = 0;
  std::vector<CovariateInfo> covariate_info_;
  std::vector<std::string> ids_;
  std::vector<std::uint8_t> events_;
  std::vector<std::size_t> offsets_{0};
  std::vector<double> values_;  // column-major, num_individuals per column
  std::vector<std::uint32_t> row_individual_;
  std::vector<std::int32_t> row_time_;
  std::vector<std::uint8_t> row_y_;
  std::vector<std::size_t> rows_per_time_;
};

// Throws HorizonError when some t_i > horizon and ValidationError for invalid
// records. Individual order is preserved.
AugmentedDataset augment(const PersonData& data, int horizon);

// Inverse of augment: one record per block, time = block length and event =
// y on the block's last row.
PersonData collapse(const AugmentedDataset& data);

// A set of whole individuals. Individuals are kept in ascending index order.
struct Batch {
  std::vector<std::uint32_t> individuals;
  std::size_t row_count = 0;

  std::vector<std::size_t> row_indices(const AugmentedDataset& data) const;
};

Batch full_batch(const AugmentedDataset& data);

// Draws individuals uniformly without replacement, adding whole blocks until
// at least max_rows rows are collected; the individual crossing the limit is
// kept. Returns every individual when total_rows <= max_rows. Throws
// ConfigError when max_rows is smaller than the longest block.
Batch sample_batch(const AugmentedDataset& data, std::size_t max_rows, Rng& rng);

// Column roles for person-level CSV input.
struct CsvSchema {
  std::string id_column = "id";
  std::string time_column = "time";
  std::string event_column = "event";
  // Empty means every remaining column.
  std::vector<std::string> covariate_columns;
  std::vector<std::string> categorical_columns;
};

// Errors name the data row (1-based, header excluded) and the column.
PersonData load_csv(const std::string& path, const CsvSchema& schema);
PersonData parse_csv(std::istream& in, const CsvSchema& schema);

void write_csv(std::ostream& out, const PersonData& data, const CsvSchema& schema = {});

}  // namespace dhazard
