#include "emcad/cost.hpp"

#include "emcad/errors.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace emcad {

namespace {

using u64 = std::uint64_t;

class Tally {
public:
  Tally(FlopConvention convention, bool with_flops)
      : full_(convention == FlopConvention::Full), with_flops_(with_flops) {}

  CostNode conv(const std::string &name, const ConvParams &p,
                u64 out_pixels) const {
    const u64 per_out = static_cast<u64>(p.in_channels / p.groups) *
                        p.kernel_h * p.kernel_w;
    CostNode n = named_node(name);
    n.params = static_cast<u64>(p.out_channels) * per_out +
               (p.bias ? static_cast<u64>(p.out_channels) : 0);
    u64 f = out_pixels * p.out_channels * per_out;
    if (full_ && p.bias)
      f += out_pixels * p.out_channels;
    n.flops = with_flops_ ? f : 0;
    return n;
  }
  CostNode norm(const std::string &name, const NormParams &p,
                u64 pixels) const {
    CostNode n = named_node(name);
    n.params = p.param_count();
    n.flops = full_ && with_flops_ ? 2 * pixels * p.channels() : 0;
    return n;
  }
  // Elementwise op priced at one FLOP per element in the full convention.
  CostNode elementwise(const std::string &name, u64 elements) const {
    CostNode n = named_node(name);
    n.flops = full_ && with_flops_ ? elements : 0;
    return n;
  }

private:
  bool full_;
  bool with_flops_;
};

CostNode &sum_up(CostNode &node) {
  if (node.is_leaf())
    return node;
  node.params = 0;
  node.flops = 0;
  for (auto &c : node.children) {
    sum_up(c);
    node.params += c.params;
    node.flops += c.flops;
  }
  return node;
}

CostNode block(std::string name, std::vector<CostNode> children) {
  CostNode n = named_node(std::move(name));
  n.children = std::move(children);
  return sum_up(n);
}

CostNode gate_node(const Tally &t, const std::string &name,
                   const GateParams &g, u64 pixels) {
  return block(name, {t.conv("gc_g", g.gc_g, pixels),
                      t.norm("bn_g", g.bn_g, pixels),
                      t.conv("gc_x", g.gc_x, pixels),
                      t.norm("bn_x", g.bn_x, pixels),
                      t.elementwise("relu", pixels * g.intermediate()),
                      t.conv("psi", g.psi, pixels),
                      t.norm("bn_psi", g.bn_psi, pixels)});
}

CostNode mscam_node(const Tally &t, const MSCAMParams &m, u64 pixels) {
  const int c = m.cab.channels();
  const int r = m.cab.reduce.out_channels;
  // Both pooled descriptors go through the shared reduce/expand pair.
  CostNode reduce = t.conv("reduce", m.cab.reduce, 2);
  CostNode expand = t.conv("expand", m.cab.expand, 2);
  CostNode cab = block("cab", {t.elementwise("pool_max", pixels * c),
                               t.elementwise("pool_avg", pixels * c),
                               std::move(reduce),
                               t.elementwise("relu", 2u * r),
                               std::move(expand)});
  CostNode sab = block("sab", {t.conv("lkc", m.sab.lkc, pixels)});

  const MSCBParams &b = m.mscb;
  const u64 ex = static_cast<u64>(b.expanded());
  std::vector<CostNode> mscb{t.conv("pwc1", b.pwc1, pixels),
                             t.norm("bn1", b.bn1, pixels),
                             t.elementwise("relu6", pixels * ex)};
  for (std::size_t i = 0; i < b.dwcbs.size(); ++i)
    mscb.push_back(block("dwcb" + std::to_string(i),
                         {t.conv("conv", b.dwcbs[i].conv, pixels),
                          t.norm("bn", b.dwcbs[i].bn, pixels),
                          t.elementwise("relu6", pixels * ex)}));
  mscb.push_back(t.conv("pwc2", b.pwc2, pixels));
  mscb.push_back(t.norm("bn2", b.bn2, pixels));
  return block("mscam",
               {std::move(cab), std::move(sab), block("mscb", std::move(mscb))});
}

CostReport tally(const Decoder &dec, int input_h, int input_w,
                 FlopConvention convention, bool with_flops) {
  const Tally t(convention, with_flops);
  CostReport report;
  report.input_h = input_h;
  report.input_w = input_w;
  report.convention = convention;
  for (const DecoderStage &st : dec.stages()) {
    const int scale = 2 << st.level; // level 1 -> 4, level 4 -> 32
    const u64 pixels = with_flops ? static_cast<u64>(input_h / scale) *
                                        static_cast<u64>(input_w / scale)
                                  : 0;
    std::vector<CostNode> parts;
    if (st.eucb) {
      const EUCBParams &e = *st.eucb;
      const u64 c_in = static_cast<u64>(e.dwc.in_channels);
      parts.push_back(block("eucb", {t.elementwise("upsample", pixels * c_in),
                                     t.conv("dwc", e.dwc, pixels),
                                     t.norm("bn", e.bn, pixels),
                                     t.elementwise("relu", pixels * c_in),
                                     t.conv("proj", e.proj, pixels)}));
    }
    if (st.gate)
      parts.push_back(gate_node(t, "gate", *st.gate, pixels));
    if (st.mscam)
      parts.push_back(mscam_node(t, *st.mscam, pixels));
    CostNode head = t.conv("head", st.head, pixels);
    head.head = true;
    parts.push_back(std::move(head));
    report.root.children.push_back(
        block("stage" + std::to_string(st.level), std::move(parts)));
  }
  sum_up(report.root);
  return report;
}

void sum_heads(const CostNode &n, u64 &params, u64 &flops) {
  if (n.head) {
    params += n.params;
    flops += n.flops;
    return;
  }
  for (const auto &c : n.children)
    sum_heads(c, params, flops);
}

void render_node(const CostNode &n, const std::string &prefix, int depth,
                 TableFormat format, std::ostringstream &out) {
  const std::string path = prefix.empty() ? n.name : prefix + "." + n.name;
  if (format == TableFormat::Csv) {
    out << path << ',' << n.params << ',' << n.flops << '\n';
  } else {
    const std::string label = std::string(2 * depth, ' ') + n.name;
    char line[160];
    std::snprintf(line, sizeof line, "%-32s %12llu %16llu\n", label.c_str(),
                  static_cast<unsigned long long>(n.params),
                  static_cast<unsigned long long>(n.flops));
    out << line;
  }
  for (const auto &c : n.children)
    render_node(c, path, depth + 1, format, out);
}

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

} // namespace

std::string to_string(FlopConvention c) {
  return c == FlopConvention::Macs ? "macs" : "full";
}

u64 CostReport::body_params() const {
  u64 p = 0, f = 0;
  sum_heads(root, p, f);
  return root.params - p;
}

u64 CostReport::body_flops() const {
  u64 p = 0, f = 0;
  sum_heads(root, p, f);
  return root.flops - f;
}

const CostNode *CostReport::find(const std::string &path) const {
  const CostNode *cur = &root;
  std::istringstream parts(path);
  std::string part;
  while (std::getline(parts, part, '.')) {
    const CostNode *next = nullptr;
    for (const auto &c : cur->children)
      if (c.name == part)
        next = &c;
    if (!next)
      return nullptr;
    cur = next;
  }
  return cur;
}

CostReport count_params(const Decoder &dec) {
  return tally(dec, 0, 0, FlopConvention::Macs, false);
}

CostReport count_flops(const Decoder &dec, int input_h, int input_w,
                       FlopConvention convention) {
  feature_shapes(dec.config(), 1, input_h, input_w); // validates resolution
  return tally(dec, input_h, input_w, convention, true);
}

GateComparison compare_gate_costs(const DecoderConfig &cfg, int input_h,
                                  int input_w, FlopConvention convention) {
  cfg.validate();
  feature_shapes(cfg, 1, input_h, input_w);
  const Tally t(convention, true);
  GateComparison out;
  for (CostReport *r : {&out.lgag, &out.ag}) {
    r->input_h = input_h;
    r->input_w = input_w;
    r->convention = convention;
    r->root.name = r == &out.lgag ? "lgag" : "ag";
  }
  for (int level = 3; level >= 1; --level) {
    const int c = cfg.channels[level - 1];
    const int scale = 2 << level;
    const u64 pixels = static_cast<u64>(input_h / scale) * (input_w / scale);
    const std::string name = "stage" + std::to_string(level);
    out.lgag.root.children.push_back(gate_node(
        t, name,
        make_lgag(c, c, cfg.gate_intermediate(c), cfg.gate_groups(c)), pixels));
    out.ag.root.children.push_back(
        gate_node(t, name, make_ag(c, c, cfg.gate_intermediate(c)), pixels));
  }
  sum_up(out.lgag.root);
  sum_up(out.ag.root);
  return out;
}

GateCalibration calibrate_gate_defaults(const std::array<int, 4> &channels,
                                        std::uint64_t target_params) {
  GateCalibration best;
  u64 best_gap = std::numeric_limits<u64>::max();
  for (int divisor : {4, 2, 1}) {
    for (int cpg = 1; cpg <= channels[0]; ++cpg) {
      DecoderConfig cfg;
      cfg.channels = channels;
      cfg.lgag_intermediate_divisor = divisor;
      cfg.lgag_channels_per_group = cpg;
      try {
        cfg.validate();
      } catch (const ConfigError &) {
        continue;
      }
      u64 total = 0;
      for (int level = 1; level <= 3; ++level) {
        const int c = channels[level - 1];
        const GateParams g =
            make_lgag(c, c, cfg.gate_intermediate(c), cfg.gate_groups(c));
        total += g.gc_g.param_count() + g.gc_x.param_count() +
                 g.psi.param_count() + g.bn_g.param_count() +
                 g.bn_x.param_count() + g.bn_psi.param_count();
      }
      const u64 gap =
          total > target_params ? total - target_params : target_params - total;
      if (gap < best_gap) {
        best_gap = gap;
        best = GateCalibration{divisor, cpg, total};
      }
    }
  }
  if (best.intermediate_divisor == 0)
    throw ConfigError("no valid gate grouping for the given widths");
  return best;
}

std::string format_si(double value, int decimals) {
  const char *suffix = "";
  double scaled = value;
  if (std::abs(value) >= 1e9) {
    scaled = value / 1e9;
    suffix = "G";
  } else if (std::abs(value) >= 1e6) {
    scaled = value / 1e6;
    suffix = "M";
  } else if (std::abs(value) >= 1e3) {
    scaled = value / 1e3;
    suffix = "K";
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f%s", decimals, scaled, suffix);
  return buf;
}

std::string format_scaled(double value, char unit, int decimals) {
  double div = 1.0;
  switch (unit) {
  case 'K':
    div = 1e3;
    break;
  case 'M':
    div = 1e6;
    break;
  case 'G':
    div = 1e9;
    break;
  default:
    throw ConfigError(std::string("unknown unit '") + unit + "'");
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f%c", decimals, value / div, unit);
  return buf;
}

std::string render_table(const CostReport &report, TableFormat format) {
  std::ostringstream out;
  if (format == TableFormat::Csv) {
    out << "block,params,flops\n";
  } else {
    char line[160];
    std::snprintf(line, sizeof line, "%-32s %12s %16s\n", "block", "params",
                  "flops");
    out << line;
  }
  if (report.root.children.empty())
    return out.str();
  for (const auto &c : report.root.children)
    render_node(c, "", 0, format, out);

  if (format == TableFormat::Csv) {
    out << "total," << report.total_params() << ',' << report.total_flops()
        << '\n';
    out << "body," << report.body_params() << ',' << report.body_flops()
        << '\n';
  } else {
    char line[200];
    std::snprintf(line, sizeof line, "%-32s %12llu %16llu\n", "total",
                  static_cast<unsigned long long>(report.total_params()),
                  static_cast<unsigned long long>(report.total_flops()));
    out << line;
    std::snprintf(line, sizeof line, "%-32s %12llu %16llu\n",
                  "body (excl. heads)",
                  static_cast<unsigned long long>(report.body_params()),
                  static_cast<unsigned long long>(report.body_flops()));
    out << line;
    out << "decoder: " << format_si(report.body_params(), 2) << " params / "
        << format_scaled(report.body_flops(), 'G', 3) << " FLOPs @" << report.input_h
        << 'x' << report.input_w << " (" << to_string(report.convention)
        << ")\n";
  }
  return out.str();
}

bool ExpectationResult::pass() const {
  if (!found)
    return false;
  if (expectation.expected == 0)
    return actual == 0;
  return std::abs(actual - expectation.expected) <= expectation.rel_tol * expectation.expected;
}

std::vector<Expectation> parse_expectations(const std::string &csv_text) {
  std::vector<Expectation> rows;
  std::istringstream in(csv_text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#')
      continue;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string col;
    while (std::getline(ls, col, ','))
      cols.push_back(trim(col));
    if (cols.size() != 3)
      throw FormatError("expectation line " + std::to_string(lineno) +
                        ": want key,expected,rel_tol");
    if (cols[0] == "key")
      continue; // header
    try {
      rows.push_back({cols[0], std::stod(cols[1]), std::stod(cols[2])});
    } catch (const std::exception &) {
      throw FormatError("expectation line " + std::to_string(lineno) +
                        ": non-numeric value");
    }
  }
  return rows;
}

std::vector<ExpectationResult>
check_expectations(const CostReport &report,
                   const std::vector<Expectation> &expectations) {
  std::vector<ExpectationResult> out;
  for (const auto &e : expectations) {
    ExpectationResult r{e};
    r.found = true;
    if (e.key == "params") {
      r.actual = static_cast<double>(report.body_params());
    } else if (e.key == "flops") {
      r.actual = static_cast<double>(report.body_flops());
    } else if (e.key == "total_params") {
      r.actual = static_cast<double>(report.total_params());
    } else if (e.key == "total_flops") {
      r.actual = static_cast<double>(report.total_flops());
    } else {
      const auto slash = e.key.rfind('/');
      const CostNode *node =
          slash == std::string::npos ? nullptr : report.find(e.key.substr(0, slash));
      const std::string field =
          slash == std::string::npos ? "" : e.key.substr(slash + 1);
      if (node && field == "params")
        r.actual = static_cast<double>(node->params);
      else if (node && field == "flops")
        r.actual = static_cast<double>(node->flops);
      else
        r.found = false;
    }
    out.push_back(r);
  }
  return out;
}

} // namespace emcad
