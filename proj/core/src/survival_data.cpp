#include "dhazard/survival_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <unordered_set>

#include "dhazard/csv.hpp"
#include "dhazard/error.hpp"

namespace dhazard {

std::optional<std::size_t> PersonData::covariate_index(std::string_view name) const {
  for (std::size_t i = 0; i < covariates.size(); ++i) {
    if (covariates[i].name == name) return i;
  }
  return std::nullopt;
}

int PersonData::max_time() const {
  int m = 0;
  for (const auto& r : records) m = std::max(m, r.time);
  return m;
}

void validate(const PersonData& data) {
  const std::size_t p = data.covariates.size();
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    if (r.time < 1) {
      throw ValidationError("record " + std::to_string(i + 1) + " (id " + r.id +
                            "): time must be >= 1, got " + std::to_string(r.time));
    }
    if (r.event != 0 && r.event != 1) {
      throw ValidationError("record " + std::to_string(i + 1) + " (id " + r.id +
                            "): event must be 0 or 1, got " + std::to_string(r.event));
    }
    if (r.covariates.size() != p) {
      throw ValidationError("record " + std::to_string(i + 1) + " (id " + r.id + "): expected " +
                            std::to_string(p) + " covariates, got " +
                            std::to_string(r.covariates.size()));
    }
  }
}

PersonData truncate_to_horizon(PersonData data, int horizon) {
  if (horizon < 1) throw ValidationError("horizon must be >= 1");
  for (auto& r : data.records) {
    if (r.time > horizon) {
      r.time = horizon;
      r.event = 0;
    }
  }
  return data;
}

AugmentedDataset augment(const PersonData& data, int horizon) {
  if (horizon < 1) throw ValidationError("horizon must be >= 1");
  validate(data);
  const std::size_t n = data.records.size();
  const std::size_t p = data.covariates.size();

  AugmentedDataset out;
  out.horizon_ = horizon;
  out.covariate_info_ = data.covariates;
  out.ids_.reserve(n);
  out.events_.reserve(n);
  out.offsets_.reserve(n + 1);
  out.values_.resize(n * p);
  out.rows_per_time_.assign(static_cast<std::size_t>(horizon), 0);

  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = data.records[i];
    if (r.time > horizon) {
      throw HorizonError("record " + std::to_string(i + 1) + " (id " + r.id + "): time " +
                         std::to_string(r.time) + " exceeds horizon " + std::to_string(horizon));
    }
    total += static_cast<std::size_t>(r.time);
  }
  if (n > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("too many individuals");
  out.row_individual_.reserve(total);
  out.row_time_.reserve(total);
  out.row_y_.reserve(total);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = data.records[i];
    out.ids_.push_back(r.id);
    out.events_.push_back(static_cast<std::uint8_t>(r.event));
    for (std::size_t c = 0; c < p; ++c) out.values_[c * n + i] = r.covariates[c];
    for (int t = 1; t <= r.time; ++t) {
      out.row_individual_.push_back(static_cast<std::uint32_t>(i));
      out.row_time_.push_back(t);
      out.row_y_.push_back(static_cast<std::uint8_t>(t == r.time && r.event == 1));
      ++out.rows_per_time_[static_cast<std::size_t>(t - 1)];
    }
    out.offsets_.push_back(out.row_individual_.size());
    out.max_time_ = std::max(out.max_time_, r.time);
  }
  return out;
}

PersonData collapse(const AugmentedDataset& data) {
  PersonData out;
  out.covariates = data.covariates();
  const std::size_t p = out.covariates.size();
  out.records.reserve(data.num_individuals());
  for (std::size_t i = 0; i < data.num_individuals(); ++i) {
    const RowRange b = data.block(i);
    IndividualRecord r;
    r.id = data.id(i);
    int t_max = 0;
    int flag = 0;
    for (std::size_t row = b.begin; row < b.end; ++row) {
      t_max = std::max(t_max, data.row_time(row));
      flag = std::max(flag, data.row_y(row));
    }
    r.time = t_max;
    r.event = flag;
    r.covariates.resize(p);
    for (std::size_t c = 0; c < p; ++c) r.covariates[c] = data.covariate(i, c);
    out.records.push_back(std::move(r));
  }
  return out;
}

std::vector<std::size_t> Batch::row_indices(const AugmentedDataset& data) const {
  std::vector<std::size_t> rows;
  rows.reserve(row_count);
  for (auto i : individuals) {
    const RowRange b = data.block(i);
    for (std::size_t r = b.begin; r < b.end; ++r) rows.push_back(r);
  }
  return rows;
}

Batch full_batch(const AugmentedDataset& data) {
  Batch b;
  b.individuals.resize(data.num_individuals());
  for (std::size_t i = 0; i < b.individuals.size(); ++i) b.individuals[i] = static_cast<std::uint32_t>(i);
  b.row_count = data.total_rows();
  return b;
}

Batch sample_batch(const AugmentedDataset& data, std::size_t max_rows, Rng& rng) {
  if (max_rows < static_cast<std::size_t>(data.max_time())) {
    throw ConfigError("batch size M = " + std::to_string(max_rows) +
                      " is smaller than the longest individual block (" +
                      std::to_string(data.max_time()) + " rows)");
  }
  if (data.total_rows() <= max_rows) return full_batch(data);

  const std::size_t n = data.num_individuals();
  Batch batch;
  // Rejection sampling keeps the cost proportional to the batch, not to n.
  std::unordered_set<std::uint32_t> seen;
  while (batch.row_count < max_rows) {
    const auto i = static_cast<std::uint32_t>(rng.uniform_index(n));
    if (!seen.insert(i).second) continue;
    batch.individuals.push_back(i);
    batch.row_count += static_cast<std::size_t>(data.observed_time(i));
  }
  std::sort(batch.individuals.begin(), batch.individuals.end());
  return batch;
}

namespace {

bool is_missing(std::string_view s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null" || s == "NULL";
}

std::string cell_error(std::size_t row, const std::string& column, const std::string& what) {
  return "row " + std::to_string(row) + ", column '" + column + "': " + what;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

PersonData parse_csv(std::istream& in, const CsvSchema& schema) {
  const csv::Table table = csv::read(in);
  auto require = [&](const std::string& name) {
    const int c = table.column(name);
    if (c < 0) throw ValidationError("missing column '" + name + "'");
    return static_cast<std::size_t>(c);
  };
  const std::size_t id_col = require(schema.id_column);
  const std::size_t time_col = require(schema.time_column);
  const std::size_t event_col = require(schema.event_column);

  std::vector<std::string> names = schema.covariate_columns;
  if (names.empty()) {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (c != id_col && c != time_col && c != event_col) names.push_back(table.header[c]);
    }
  }
  for (const auto& cat : schema.categorical_columns) {
    if (std::find(names.begin(), names.end(), cat) == names.end()) {
      throw ValidationError("categorical column '" + cat + "' is not a covariate column");
    }
  }

  PersonData out;
  std::vector<std::size_t> cols;
  for (const auto& name : names) {
    cols.push_back(require(name));
    CovariateInfo info;
    info.name = name;
    if (std::find(schema.categorical_columns.begin(), schema.categorical_columns.end(), name) !=
        schema.categorical_columns.end()) {
      info.kind = CovariateKind::categorical;
      std::map<std::string, int> levels;
      for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string_view v = trim(table.rows[r][cols.back()]);
        if (is_missing(v)) throw ValidationError(cell_error(r + 1, name, "missing value"));
        levels.emplace(std::string(v), 0);
      }
      for (const auto& [level, unused] : levels) info.levels.push_back(level);
    }
    out.covariates.push_back(std::move(info));
  }

  auto parse_int = [](std::string_view s, long& v) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc{} && ptr == s.data() + s.size();
  };

  std::unordered_set<std::string> ids;
  out.records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    IndividualRecord rec;
    rec.id = std::string(trim(row[id_col]));
    if (rec.id.empty()) throw ValidationError(cell_error(r + 1, schema.id_column, "missing value"));
    if (!ids.insert(rec.id).second) {
      throw ValidationError(cell_error(r + 1, schema.id_column, "duplicate id '" + rec.id + "'"));
    }

    long v = 0;
    const std::string_view t = trim(row[time_col]);
    if (is_missing(t)) throw ValidationError(cell_error(r + 1, schema.time_column, "missing value"));
    if (!parse_int(t, v) || v < 1) {
      throw ValidationError(cell_error(r + 1, schema.time_column,
                                       "expected a positive integer, got '" + std::string(t) + "'"));
    }
    rec.time = static_cast<int>(v);

    const std::string_view e = trim(row[event_col]);
    if (is_missing(e)) throw ValidationError(cell_error(r + 1, schema.event_column, "missing value"));
    if (!parse_int(e, v) || (v != 0 && v != 1)) {
      throw ValidationError(cell_error(r + 1, schema.event_column,
                                       "expected 0 or 1, got '" + std::string(e) + "'"));
    }
    rec.event = static_cast<int>(v);

    rec.covariates.resize(cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::string_view cell = trim(row[cols[c]]);
      const auto& info = out.covariates[c];
      if (is_missing(cell)) throw ValidationError(cell_error(r + 1, info.name, "missing value"));
      if (info.kind == CovariateKind::categorical) {
        const auto it = std::lower_bound(info.levels.begin(), info.levels.end(), cell);
        rec.covariates[c] = static_cast<double>(it - info.levels.begin());
        continue;
      }
      double x = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
      if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(x)) {
        throw ValidationError(cell_error(r + 1, info.name, "cannot parse '" + std::string(cell) + "'"));
      }
      rec.covariates[c] = x;
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

PersonData load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return parse_csv(in, schema);
}

void write_csv(std::ostream& out, const PersonData& data, const CsvSchema& schema) {
  std::vector<std::string> header{schema.id_column, schema.time_column, schema.event_column};
  for (const auto& c : data.covariates) header.push_back(c.name);
  csv::write_row(out, header);
  std::vector<std::string> fields;
  for (const auto& r : data.records) {
    fields = {r.id, std::to_string(r.time), std::to_string(r.event)};
    for (std::size_t c = 0; c < r.covariates.size(); ++c) {
      const auto& info = data.covariates[c];
      if (info.kind == CovariateKind::categorical) {
        fields.push_back(info.levels.at(static_cast<std::size_t>(r.covariates[c])));
      } else {
        fields.push_back(csv::format_double(r.covariates[c]));
      }
    }
    csv::write_row(out, fields);
  }
}

}  // namespace dhazard
