#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "consql/pot.hpp"

namespace consql::pot {

std::optional<AggFn> agg_fn_from_string(std::string_view s);

/// Case-insensitive column lookup.
std::optional<std::size_t> find_name(const std::vector<std::string>& names, std::string_view name);
/// Throws SchemaMismatch when absent.
std::size_t require_column(const std::vector<std::string>& names, std::string_view name);
void check_unique(const std::vector<std::string>& names);

struct MergeColumn {
  int side;           // 0 left, 1 right
  std::size_t index;  // column index within that side
  std::string name;
};

/// pandas.merge output columns: left columns, then right columns without the
/// same-named keys; other shared names get _x / _y.
struct MergeLayout {
  std::vector<std::pair<std::size_t, std::size_t>> key_pairs;
  std::vector<MergeColumn> columns;
};
MergeLayout merge_layout(const Merge& m, const std::vector<std::string>& left,
                         const std::vector<std::string>& right);

/// Keys (canonical spelling from the input) followed by aggregate names.
std::vector<std::string> group_output_names(const GroupAgg& g, const std::vector<std::string>& input);

}  // namespace consql::pot
