#pragma once

// Line-oriented trace files.
//
//   # fragtree trace v1
//   H <key>=<value> ...            measure hash, alpha, n, seed, tolerances
//   M <measure json>
//   F <parent> <stream> <birth> <mass> <end_time> <end_kind> <split_event> <lifetime> <nlabels> <labels...>
//   E <time> <parent> <dropped> <until> <k> <s_1..s_k> <children_1..k> <nassign> <label:idx...>
//   D <label> <value> <error>
//
// Fragment and event rows appear in id order. Reals use %.17g, so a reload
// reproduces the trace bit for bit. ParseError positions are line numbers.

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "fragtree/engine.hpp"
#include "fragtree/errors.hpp"
#include "fragtree/measure_io.hpp"

namespace fragtree {

namespace detail {

inline std::string fmt_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class LineReader {
 public:
  LineReader(std::string line, std::size_t lineno) : in_(std::move(line)), lineno_(lineno) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) fail("unexpected end of record");
    return w;
  }
  double real() {
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end == w.c_str() || *end != '\0') fail("bad real '" + w + "'");
    return v;
  }
  std::int64_t integer() {
    const std::string w = word();
    char* end = nullptr;
    const long long v = std::strtoll(w.c_str(), &end, 10);
    if (end == w.c_str() || *end != '\0') fail("bad integer '" + w + "'");
    return v;
  }
  std::uint64_t unsigned_integer() {
    const std::string w = word();
    char* end = nullptr;
    const unsigned long long v = std::strtoull(w.c_str(), &end, 10);
    if (end == w.c_str() || *end != '\0' || w[0] == '-') fail("bad unsigned '" + w + "'");
    return v;
  }
  void done() {
    std::string w;
    if (in_ >> w) fail("trailing data '" + w + "'");
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError("trace: " + msg, lineno_); }

 private:
  std::istringstream in_;
  std::size_t lineno_;
};

}  // namespace detail

inline void write_trace(std::ostream& out, const FragmentationTrace& tr) {
  using detail::fmt_real;
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016" PRIx64, measure_hash(*tr.measure));
  out << "# fragtree trace v1\n";
  out << "H measure_hash=" << hash << " alpha=" << fmt_real(tr.alpha) << " n=" << tr.n
      << " seed=" << tr.seed << " horizon=" << fmt_real(tr.options.horizon)
      << " death_tol=" << fmt_real(tr.options.death_tol)
      << " mass_floor=" << fmt_real(tr.options.mass_floor)
      << " full_mode=" << (tr.options.full_mode ? 1 : 0)
      << " pilot_runs=" << tr.options.pilot_runs
      << " pilot_floor=" << fmt_real(tr.options.pilot_floor) << " drift=" << fmt_real(tr.drift)
      << " phi=" << fmt_real(tr.phi_abs_alpha) << " extinction_q=" << fmt_real(tr.extinction_quantile)
      << " fragments=" << tr.fragments.size() << " events=" << tr.events.size() << "\n";
  out << "M " << measure_to_string(*tr.measure) << "\n";
  for (const auto& f : tr.fragments) {
    out << "F " << f.parent << ' ' << f.stream << ' ' << fmt_real(f.birth_time) << ' ' << fmt_real(f.birth_mass) << ' '
        << fmt_real(f.end_time) << ' ' << static_cast<int>(f.end) << ' ' << f.split_event << ' '
        << fmt_real(f.lifetime_bound) << ' ' << f.labels.size();
    for (Label l : f.labels) out << ' ' << l;
    out << '\n';
  }
  for (const auto& e : tr.events) {
    out << "E " << fmt_real(e.time) << ' ' << e.parent << ' ' << fmt_real(e.dropped_mass) << ' '
        << fmt_real(e.dropped_until) << ' ' << e.split.size();
    for (double s : e.split.masses()) out << ' ' << fmt_real(s);
    for (auto c : e.children) out << ' ' << c;
    out << ' ' << e.assignment.size();
    for (const auto& [l, j] : e.assignment) out << ' ' << l << ':' << j;
    out << '\n';
  }
  for (std::size_t i = 0; i < tr.death_times.size(); ++i)
    out << "D " << (i + 1) << ' ' << fmt_real(tr.death_times[i].value) << ' '
        << fmt_real(tr.death_times[i].error) << '\n';
}

inline std::string trace_to_string(const FragmentationTrace& tr) {
  std::ostringstream os;
  write_trace(os, tr);
  return os.str();
}

inline FragmentationTrace read_trace(std::istream& in) {
  FragmentationTrace tr;
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::string> header;
  bool have_header = false, have_measure = false;
  std::size_t expect_fragments = 0, expect_events = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (line.size() < 2 || line[1] != ' ') throw ParseError("trace: malformed record", lineno);
    detail::LineReader r(line.substr(2), lineno);
    switch (line[0]) {
      case 'H': {
        std::istringstream hs(line.substr(2));
        std::string kv;
        while (hs >> kv) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) r.fail("bad header field '" + kv + "'");
          header[kv.substr(0, eq)] = kv.substr(eq + 1);
        }
        auto get = [&](const char* key) -> std::string {
          auto it = header.find(key);
          if (it == header.end()) r.fail(std::string("missing header field ") + key);
          return it->second;
        };
        auto real = [&](const char* key) { return detail::LineReader(get(key), lineno).real(); };
        auto uns = [&](const char* key) { return detail::LineReader(get(key), lineno).unsigned_integer(); };
        tr.alpha = real("alpha");
        tr.n = uns("n");
        tr.seed = uns("seed");
        tr.options.horizon = real("horizon");
        tr.options.death_tol = real("death_tol");
        tr.options.mass_floor = real("mass_floor");
        tr.options.full_mode = uns("full_mode") != 0;
        tr.options.pilot_runs = uns("pilot_runs");
        tr.options.pilot_floor = real("pilot_floor");
        tr.drift = real("drift");
        tr.phi_abs_alpha = real("phi");
        tr.extinction_quantile = real("extinction_q");
        expect_fragments = uns("fragments");
        expect_events = uns("events");
        tr.fragments.reserve(expect_fragments);
        tr.events.reserve(expect_events);
        tr.death_times.assign(tr.n, DeathTime{});
        have_header = true;
        break;
      }
      case 'M': {
        if (!have_header) r.fail("measure before header");
        try {
          tr.measure = std::make_shared<const DislocationMeasure>(measure_from_string(line.substr(2)));
        } catch (const std::exception& e) {
          r.fail(e.what());
        }
        char hash[20];
        std::snprintf(hash, sizeof hash, "%016" PRIx64, measure_hash(*tr.measure));
        if (header["measure_hash"] != hash) r.fail("measure hash mismatch");
        have_measure = true;
        break;
      }
      case 'F': {
        if (!have_measure) r.fail("fragment before measure");
        FragmentRecord f;
        f.parent = r.integer();
        f.stream = r.unsigned_integer();
        f.birth_time = r.real();
        f.birth_mass = r.real();
        f.end_time = r.real();
        const auto kind = r.integer();
        if (kind < 0 || kind > 3) r.fail("bad end kind");
        f.end = static_cast<EndKind>(kind);
        f.split_event = r.integer();
        f.lifetime_bound = r.real();
        const auto nl = r.unsigned_integer();
        f.labels.reserve(nl);
        for (std::uint64_t i = 0; i < nl; ++i) f.labels.push_back(static_cast<Label>(r.unsigned_integer()));
        r.done();
        tr.fragments.push_back(std::move(f));
        break;
      }
      case 'E': {
        if (!have_measure) r.fail("event before measure");
        SplitEvent e;
        e.time = r.real();
        e.parent = r.integer();
        e.dropped_mass = r.real();
        e.dropped_until = r.real();
        const auto k = r.unsigned_integer();
        std::vector<double> s(k);
        for (auto& x : s) x = r.real();
        try {
          e.split = RankedMassSequence(std::move(s));
        } catch (const ValidationError& ex) {
          r.fail(ex.what());
        }
        e.children.resize(k);
        for (auto& c : e.children) c = r.integer();
        const auto na = r.unsigned_integer();
        e.assignment.reserve(na);
        for (std::uint64_t i = 0; i < na; ++i) {
          const std::string w = r.word();
          const auto colon = w.find(':');
          if (colon == std::string::npos) r.fail("bad assignment '" + w + "'");
          detail::LineReader a(w.substr(0, colon), lineno), b(w.substr(colon + 1), lineno);
          e.assignment.emplace_back(static_cast<Label>(a.unsigned_integer()),
                                    static_cast<std::uint32_t>(b.unsigned_integer()));
        }
        r.done();
        tr.events.push_back(std::move(e));
        break;
      }
      case 'D': {
        if (!have_header) r.fail("death time before header");
        const auto label = r.unsigned_integer();
        if (label < 1 || label > tr.n) r.fail("death label out of range");
        DeathTime d;
        d.value = r.real();
        d.error = r.real();
        r.done();
        tr.death_times[label - 1] = d;
        break;
      }
      default:
        throw ParseError("trace: unknown record type", lineno);
    }
  }
  if (!have_header || !have_measure) throw ParseError("trace: missing header", lineno);
  if (tr.fragments.size() != expect_fragments || tr.events.size() != expect_events)
    throw ParseError("trace: record count mismatch", lineno);
  return tr;
}

inline FragmentationTrace trace_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_trace(is);
}

inline void save_trace(const std::string& path, const FragmentationTrace& tr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write trace file " + path);
  write_trace(out, tr);
}

inline FragmentationTrace load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open trace file " + path);
  return read_trace(in);
}

}  // namespace fragtree
