#include "separation.hpp"

#include <sstream>

namespace litd {

uint32_t restricted_bit_count(uint32_t n) {
  if (n < 3) fail(errc::invalid_argument, "restricted family needs n >= 3");
  return 2 * (n - 2) + 1;
}

GraphInstance RestrictedInstance::graph() const {
  const InputEncoding enc = InputEncoding::make(n);
  GraphInstance g;
  g.n = n;
  if (bits & 1u) g.adj |= uint64_t(1) << enc.edge_index(0, n - 1);
  for (uint32_t v = 1; v + 1 < n; ++v) {
    if (bits & (1u << (2 * (v - 1) + 1))) g.adj |= uint64_t(1) << enc.edge_index(0, v);
    if (bits & (1u << (2 * (v - 1) + 2))) g.adj |= uint64_t(1) << enc.edge_index(v, n - 1);
  }
  return g;
}

bool RestrictedInstance::reachable() const {
  if (bits & 1u) return true;
  for (uint32_t v = 1; v + 1 < n; ++v) {
    const uint32_t pair = (bits >> (2 * (v - 1) + 1)) & 3u;
    if (pair == 3u) return true;
  }
  return false;
}

std::vector<RestrictedInstance> enumerate_restricted_family(uint32_t n) {
  const uint32_t width = restricted_bit_count(n);
  if (width > 20) fail(errc::resource, "restricted family too wide to enumerate");
  std::vector<RestrictedInstance> out;
  out.reserve(size_t(1) << width);
  for (uint32_t bits = 0; bits < (uint32_t(1) << width); ++bits)
    out.push_back(RestrictedInstance{n, bits});
  return out;
}

NegativeCount count_negatives(uint32_t n) {
  NegativeCount c;
  for (const RestrictedInstance& inst : enumerate_restricted_family(n)) {
    ++c.total;
    if (!two_reachability_truth(inst.graph())) ++c.negatives;
  }
  return c;
}

RestrictedMinTree min_leaves_restricted(uint32_t n) {
  const uint32_t width = restricted_bit_count(n);
  if (width > 16) fail(errc::resource, "restricted family too wide for tree search");
  std::vector<uint8_t> value(size_t(1) << width);
  for (uint32_t bits = 0; bits < (uint32_t(1) << width); ++bits)
    value[bits] = RestrictedInstance{n, bits}.reachable() ? 1 : 0;
  const MinTreeResult r = min_tree_leaves(PartialFunction::total(width, std::move(value)));
  return RestrictedMinTree{r.leaves, r.witness};
}

uint64_t separation_lower_bound(uint32_t n) {
  if (n < 3) fail(errc::invalid_argument, "restricted family needs n >= 3");
  uint64_t p3 = 1, p2 = 1;
  for (uint32_t i = 0; i + 2 < n; ++i) {
    p3 *= 3;
    p2 *= 2;
  }
  return (p3 + p2 - 1) / p2;
}

std::vector<SeparationRow> separation_report(uint32_t n_lo, uint32_t n_hi) {
  if (n_lo < 3 || n_lo > n_hi) fail(errc::invalid_argument, "bad separation range");
  std::vector<SeparationRow> rows;
  for (uint32_t n = n_lo; n <= n_hi; ++n) {
    SeparationRow row;
    row.n = n;
    uint64_t agree = 0;
    for (const RestrictedInstance& inst : enumerate_restricted_family(n)) {
      ++row.total;
      const bool truth = two_reachability_truth(inst.graph());
      if (!truth) ++row.negatives;
      if (truth == inst.reachable()) ++agree;
    }
    row.dp_agreement = double(agree) / double(row.total);
    row.min_leaves = min_leaves_restricted(n).leaves;
    row.lower_bound = separation_lower_bound(n);
    if (!rows.empty()) row.growth = double(row.min_leaves) / double(rows.back().min_leaves);
    rows.push_back(row);
  }
  return rows;
}

std::string separation_csv(const std::vector<SeparationRow>& rows) {
  std::ostringstream out;
  out << "n,total,negatives,min_leaves,lower_bound,dp_agreement\n";
  for (const SeparationRow& row : rows)
    out << row.n << ',' << row.total << ',' << row.negatives << ',' << row.min_leaves
        << ',' << row.lower_bound << ',' << row.dp_agreement << '\n';
  return out.str();
}

}  // namespace litd
