#include "mdme/motion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mdme/errors.hpp"

namespace mdme {

using nlohmann::json;

namespace {

const char* kRoleNames[] = {"foot", "gravity", "height", "joint", "lin_vel", "ang_vel", "other"};

std::string axis_str(char axis) { return axis ? std::string(1, axis) : std::string(); }

json mirror_to_json(const MirrorMap& m) {
  json swaps = json::array();
  for (auto [a, b] : m.swaps) swaps.push_back({a, b});
  return {{"swap", swaps}, {"negate", m.negate}};
}

MirrorMap mirror_from_json(const json& j) {
  MirrorMap m;
  for (const auto& p : j.at("swap")) m.swaps.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
  m.negate = j.at("negate").get<std::vector<std::size_t>>();
  return m;
}

void renormalize_gravity(FrameMatrix& data, const std::vector<std::size_t>& g, double tolerance) {
  if (g.empty()) return;
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    double n2 = 0.0;
    for (auto c : g) n2 += data(r, c) * data(r, c);
    const double n = std::sqrt(n2);
    if (std::abs(n - 1.0) > tolerance) {
      throw ParseError("row " + std::to_string(r + 1) + ": projected gravity norm " + std::to_string(n) +
                       " is not within " + std::to_string(tolerance) + " of 1");
    }
    // Rows already unit to rounding are left as stored so files round-trip.
    if (std::abs(n - 1.0) > 1e-14)
      for (auto c : g) data(r, c) /= n;
  }
}

void normalize_gravity_rows(FrameMatrix& data, const std::vector<std::size_t>& g) {
  if (g.empty()) return;
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    double n2 = 0.0;
    for (auto c : g) n2 += data(r, c) * data(r, c);
    const double n = std::sqrt(n2);
    if (n > 0.0)
      for (auto c : g) data(r, c) /= n;
  }
}

bool rule_matches(const std::string& selector, const ChannelInfo& ch) {
  if (selector == "*") return true;
  if (selector.rfind("role:", 0) == 0) return parse_role(selector.substr(5)) == ch.role;
  if (selector.rfind("unit:", 0) == 0) {
    const std::string unit = selector.substr(5);
    if (!is_known_unit(unit)) throw ConfigError("noise rule: unknown unit '" + unit + "'");
    return unit == ch.unit;
  }
  throw ConfigError("noise rule: selector '" + selector + "' must be '*', 'role:<role>' or 'unit:<unit>'");
}

Eigen::MatrixXd random_orthogonal(std::size_t n, Rng& rng) {
  Eigen::MatrixXd a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

Component component_for_role(ChannelRole role) {
  switch (role) {
    case ChannelRole::foot:
    case ChannelRole::joint:
      return Component::joint;
    case ChannelRole::gravity:
    case ChannelRole::height:
      return Component::pose;
    case ChannelRole::lin_vel:
    case ChannelRole::ang_vel:
      return Component::twist;
    case ChannelRole::other:
      break;
  }
  return Component::none;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string role_name(ChannelRole role) { return kRoleNames[static_cast<int>(role)]; }

ChannelRole parse_role(const std::string& name) {
  for (int i = 0; i < 7; ++i)
    if (name == kRoleNames[i]) return static_cast<ChannelRole>(i);
  throw ConfigError("unknown channel role '" + name + "'");
}

bool is_known_unit(const std::string& unit) {
  return unit == "rad" || unit == "rad/s" || unit == "m" || unit == "m/s" || unit == "unitless";
}

void MirrorMap::validate(std::size_t channels) const {
  std::vector<std::size_t> image(channels);
  for (std::size_t i = 0; i < channels; ++i) image[i] = i;
  std::set<std::size_t> seen;
  for (auto [a, b] : swaps) {
    if (a >= channels || b >= channels) throw ConfigError("mirror map: swap index out of range");
    if (a == b || !seen.insert(a).second || !seen.insert(b).second) {
      throw ConfigError("mirror map: swap pairs must be disjoint (not an involution)");
    }
    image[a] = b;
    image[b] = a;
  }
  std::set<std::size_t> neg(negate.begin(), negate.end());
  for (auto i : negate) {
    if (i >= channels) throw ConfigError("mirror map: negate index out of range");
    if (!neg.count(image[i])) {
      throw ConfigError("mirror map: channel " + std::to_string(i) + " is negated but its partner " +
                        std::to_string(image[i]) + " is not");
    }
  }
}

std::vector<std::size_t> MotionSequence::channels_with_role(ChannelRole role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < channels.size(); ++i)
    if (channels[i].role == role) out.push_back(i);
  return out;
}

void MotionSequence::validate() const {
  if (!(rate > 0.0)) throw ConfigError("motion '" + name + "': rate must be positive");
  if (static_cast<std::size_t>(data.cols()) != channels.size()) {
    throw DimensionError("motion '" + name + "': data has " + std::to_string(data.cols()) + " columns but " +
                         std::to_string(channels.size()) + " channels are declared");
  }
  for (Eigen::Index r = 0; r < data.rows(); ++r)
    for (Eigen::Index c = 0; c < data.cols(); ++c)
      if (!std::isfinite(data(r, c))) {
        throw NumericError("motion '" + name + "': non-finite value at row " + std::to_string(r + 1) + ", column " +
                           channels[c].name);
      }
  for (const auto& ch : channels)
    if (!is_known_unit(ch.unit)) throw ConfigError("channel '" + ch.name + "': unknown unit '" + ch.unit + "'");
  if (mirror_x) mirror_x->validate(channels.size());
  if (mirror_y) mirror_y->validate(channels.size());
}

MotionLayout quadruped_layout() {
  MotionLayout l;
  l.name = "quadruped";
  const char* feet[] = {"lf", "rf", "lh", "rh"};
  const double fx[] = {0.35, 0.35, -0.35, -0.35};
  const double fy[] = {0.2, -0.2, 0.2, -0.2};
  for (int f = 0; f < 4; ++f) {
    for (char a : {'x', 'y', 'z'}) l.channels.push_back({std::string(feet[f]) + "_" + a, "m", ChannelRole::foot, a});
    l.rest.insert(l.rest.end(), {fx[f], fy[f], -0.5});
  }
  for (char a : {'x', 'y', 'z'}) l.channels.push_back({std::string("g_") + a, "unitless", ChannelRole::gravity, a});
  l.rest.insert(l.rest.end(), {0.0, 0.0, -1.0});
  l.channels.push_back({"base_z", "m", ChannelRole::height, 'z'});
  l.rest.push_back(0.5);

  // x: reflection across the x-axis swaps left and right, y -> -y.
  l.mirror_x.swaps = {{0, 3}, {1, 4}, {2, 5}, {6, 9}, {7, 10}, {8, 11}};
  l.mirror_x.negate = {1, 4, 7, 10, 13};
  // y: reflection across the y-axis swaps front and hind, x -> -x.
  l.mirror_y.swaps = {{0, 6}, {1, 7}, {2, 8}, {3, 9}, {4, 10}, {5, 11}};
  l.mirror_y.negate = {0, 3, 6, 9, 12};
  return l;
}

MotionLayout humanoid_layout(std::size_t joints) {
  static const std::vector<std::string> smpl = {
      "pelvis",     "l_hip",      "r_hip",       "spine1",     "l_knee",  "r_knee",  "spine2",  "l_ankle",
      "r_ankle",    "spine3",     "l_foot",      "r_foot",     "neck",    "l_collar", "r_collar", "head",
      "l_shoulder", "r_shoulder", "l_elbow",     "r_elbow",    "l_wrist", "r_wrist"};
  MotionLayout l;
  l.name = "humanoid";
  std::vector<std::string> names;
  for (std::size_t j = 0; j < joints; ++j) names.push_back(joints == smpl.size() ? smpl[j] : "j" + std::to_string(j));
  for (const auto& n : names)
    for (char a : {'x', 'y', 'z'}) {
      l.channels.push_back({n + "_" + a, "rad", ChannelRole::joint, a});
      l.rest.push_back(0.0);
    }
  const std::size_t g0 = l.channels.size();
  for (char a : {'x', 'y', 'z'}) l.channels.push_back({std::string("g_") + a, "unitless", ChannelRole::gravity, a});
  l.rest.insert(l.rest.end(), {0.0, 0.0, -1.0});
  const std::size_t v0 = l.channels.size();
  for (char a : {'x', 'y', 'z'}) l.channels.push_back({std::string("v_") + a, "m/s", ChannelRole::lin_vel, a});
  l.rest.insert(l.rest.end(), {0.0, 0.0, 0.0});
  const std::size_t w0 = l.channels.size();
  for (char a : {'x', 'y', 'z'}) l.channels.push_back({std::string("w_") + a, "rad/s", ChannelRole::ang_vel, a});
  l.rest.insert(l.rest.end(), {0.0, 0.0, 0.0});

  // Rotation vectors are pseudo-vectors: a reflection y -> -y maps (x, y, z) to (-x, y, -z).
  for (std::size_t j = 0; j < joints; ++j) {
    const auto& n = names[j];
    if (n.rfind("l_", 0) == 0) {
      auto it = std::find(names.begin(), names.end(), "r_" + n.substr(2));
      if (it != names.end()) {
        const std::size_t k = static_cast<std::size_t>(it - names.begin());
        for (std::size_t a = 0; a < 3; ++a) l.mirror_x.swaps.emplace_back(3 * j + a, 3 * k + a);
      }
    }
    l.mirror_x.negate.insert(l.mirror_x.negate.end(), {3 * j, 3 * j + 2});
    l.mirror_y.negate.insert(l.mirror_y.negate.end(), {3 * j + 1, 3 * j + 2});
  }
  l.mirror_x.negate.insert(l.mirror_x.negate.end(), {g0 + 1, v0 + 1, w0, w0 + 2});
  l.mirror_y.negate.insert(l.mirror_y.negate.end(), {g0, v0, w0 + 1, w0 + 2});
  return l;
}

MotionLayout layout_by_name(const std::string& name) {
  if (name == "quadruped") return quadruped_layout();
  if (name == "humanoid") return humanoid_layout();
  throw ConfigError("unknown layout '" + name + "' (expected quadruped or humanoid)");
}

MotionSequence load_motion(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open motion file '" + path + "'");
  std::string line, header_text;
  std::size_t line_no = 0;
  while (in.peek() == '#' && std::getline(in, line)) {
    ++line_no;
    header_text += line.substr(1) + "\n";
  }
  if (header_text.empty()) throw ParseError(path + ": missing '#' JSON header block");
  json h;
  try {
    h = json::parse(header_text);
  } catch (const json::exception& e) {
    throw ParseError(path + ": header is not valid JSON: " + e.what());
  }

  MotionSequence seq;
  try {
    seq.name = h.value("name", std::filesystem::path(path).stem().string());
    seq.rate = h.value("rate", 50.0);
    for (const auto& c : h.at("channels")) {
      ChannelInfo ch;
      ch.name = c.at("name").get<std::string>();
      ch.unit = c.at("unit").get<std::string>();
      if (!is_known_unit(ch.unit)) {
        throw ParseError(path + ": channel '" + ch.name + "' has unknown unit '" + ch.unit +
                         "' (expected rad, rad/s, m, m/s or unitless)");
      }
      ch.role = parse_role(c.value("role", "other"));
      const std::string axis = c.value("axis", "");
      ch.axis = axis.empty() ? 0 : axis[0];
      seq.channels.push_back(ch);
    }
    if (h.contains("mirror")) {
      const auto& m = h.at("mirror");
      if (m.contains("x")) seq.mirror_x = mirror_from_json(m.at("x"));
      if (m.contains("y")) seq.mirror_y = mirror_from_json(m.at("y"));
    }
  } catch (const json::exception& e) {
    throw ParseError(path + ": malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!(seq.rate > 0.0)) throw ParseError(path + ": rate must be positive");

  if (!std::getline(in, line)) throw ParseError(path + ": missing column header row");
  ++line_no;
  std::vector<std::string> columns;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) columns.push_back(cell);
  }
  std::vector<std::size_t> col_of(seq.channels.size());
  std::vector<std::string> missing;
  for (std::size_t c = 0; c < seq.channels.size(); ++c) {
    auto it = std::find(columns.begin(), columns.end(), seq.channels[c].name);
    if (it == columns.end()) missing.push_back(seq.channels[c].name);
    else col_of[c] = static_cast<std::size_t>(it - columns.begin());
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ParseError(path + ": missing columns: " + list);
  }

  std::vector<std::vector<double>> rows;
  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++data_row;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      ++col;
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) {
        throw ParseError(path + ": row " + std::to_string(data_row) + ", column " + std::to_string(col) +
                         ": cannot parse '" + cell + "'");
      }
      if (!std::isfinite(v)) {
        throw ParseError(path + ": row " + std::to_string(data_row) + ", column " + std::to_string(col) +
                         ": non-finite value");
      }
      values.push_back(v);
    }
    if (values.size() != columns.size()) {
      throw ParseError(path + ": row " + std::to_string(data_row) + " has " + std::to_string(values.size()) +
                       " fields, expected " + std::to_string(columns.size()));
    }
    std::vector<double> row(seq.channels.size());
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = values[col_of[c]];
    rows.push_back(std::move(row));
  }
  seq.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(seq.channels.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) seq.data(r, c) = rows[r][c];

  try {
    renormalize_gravity(seq.data, seq.channels_with_role(ChannelRole::gravity), 1e-3);
    seq.validate();
  } catch (const Error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return seq;
}

void save_motion(const MotionSequence& seq, const std::string& path) {
  seq.validate();
  json h;
  h["name"] = seq.name;
  h["rate"] = seq.rate;
  h["channels"] = json::array();
  for (const auto& ch : seq.channels) {
    h["channels"].push_back(
        {{"name", ch.name}, {"unit", ch.unit}, {"role", role_name(ch.role)}, {"axis", axis_str(ch.axis)}});
  }
  if (seq.mirror_x || seq.mirror_y) {
    h["mirror"] = json::object();
    if (seq.mirror_x) h["mirror"]["x"] = mirror_to_json(*seq.mirror_x);
    if (seq.mirror_y) h["mirror"]["y"] = mirror_to_json(*seq.mirror_y);
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write motion file '" + path + "'");
  out << "# " << h.dump() << "\n";
  for (std::size_t c = 0; c < seq.channels.size(); ++c) out << (c ? "," : "") << seq.channels[c].name;
  out << "\n";
  for (Eigen::Index r = 0; r < seq.data.rows(); ++r) {
    for (Eigen::Index c = 0; c < seq.data.cols(); ++c) out << (c ? "," : "") << format_double(seq.data(r, c));
    out << "\n";
  }
  if (!out) throw IoError("failed writing motion file '" + path + "'");
}

std::vector<MotionSequence> load_motion_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("motion directory '" + dir + "' does not exist");
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".motion") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  std::vector<MotionSequence> out;
  for (const auto& f : files) out.push_back(load_motion(f));
  return out;
}

std::vector<double> GoalWindow::latest() const {
  return {values.end() - static_cast<std::ptrdiff_t>(goal_dim), values.end()};
}

GoalWindow window(const MotionSequence& seq, std::size_t t, std::size_t history) {
  if (history == 0) throw ConfigError("window: history must be at least 1");
  if (t >= seq.frames()) {
    throw RangeError("window: frame " + std::to_string(t) + " is outside '" + seq.name + "' (" +
                     std::to_string(seq.frames()) + " frames)");
  }
  GoalWindow w;
  w.history = history;
  w.goal_dim = seq.channel_count();
  w.dt = 1.0 / seq.rate;
  w.values.resize(history * w.goal_dim);
  for (std::size_t i = 0; i < history; ++i) {
    const long src = static_cast<long>(t) - static_cast<long>(history - 1 - i);
    const auto row = static_cast<Eigen::Index>(std::max(src, 0L));
    for (std::size_t c = 0; c < w.goal_dim; ++c) w.values[i * w.goal_dim + c] = seq.data(row, c);
  }
  return w;
}

MotionSequence mirror(const MotionSequence& seq, MirrorAxis axis) {
  const auto& map = axis == MirrorAxis::x ? seq.mirror_x : seq.mirror_y;
  const char* tag = axis == MirrorAxis::x ? "x" : "y";
  if (!map) throw ConfigError("mirror: motion '" + seq.name + "' has no mirror map for axis " + tag);
  map->validate(seq.channel_count());
  MotionSequence out = seq;
  for (auto [a, b] : map->swaps) {
    out.data.col(a) = seq.data.col(b);
    out.data.col(b) = seq.data.col(a);
  }
  for (auto i : map->negate) out.data.col(i) = -out.data.col(i);
  return out;
}

MotionSequence scale_height(const MotionSequence& seq, double factor) {
  if (!(factor > 0.0)) throw ConfigError("scale_height: factor must be positive");
  MotionSequence out = seq;
  for (std::size_t c = 0; c < seq.channel_count(); ++c) {
    const auto& ch = seq.channels[c];
    if (ch.role == ChannelRole::height || (ch.role == ChannelRole::foot && ch.axis == 'z')) out.data.col(c) *= factor;
  }
  return out;
}

MotionSequence perturb(const MotionSequence& seq, const NoiseSpec& spec, Rng& rng) {
  for (const auto& r : spec.rules)
    if (r.low > r.high) throw ConfigError("noise rule '" + r.selector + "': low exceeds high");
  std::vector<const NoiseRule*> rule_of(seq.channel_count(), nullptr);
  for (std::size_t c = 0; c < seq.channel_count(); ++c)
    for (const auto& r : spec.rules)
      if (rule_matches(r.selector, seq.channels[c])) {
        rule_of[c] = &r;
        break;
      }
  MotionSequence out = seq;
  bool gravity_touched = false;
  for (Eigen::Index t = 0; t < out.data.rows(); ++t)
    for (std::size_t c = 0; c < seq.channel_count(); ++c) {
      const NoiseRule* r = rule_of[c];
      if (!r || r->low == r->high) continue;
      out.data(t, c) += rng.uniform(r->low, r->high);
      if (seq.channels[c].role == ChannelRole::gravity) gravity_touched = true;
    }
  if (gravity_touched) normalize_gravity_rows(out.data, seq.channels_with_role(ChannelRole::gravity));
  return out;
}

MotionSequence synth_motion(const MotionSpec& spec, Rng& rng) {
  const std::size_t n = spec.channels.size();
  if (spec.base.size() != n) throw ConfigError("synth_motion: base has the wrong length");
  MotionSequence seq;
  seq.name = spec.name;
  seq.rate = spec.rate;
  seq.channels = spec.channels;
  seq.mirror_x = spec.mirror_x;
  seq.mirror_y = spec.mirror_y;
  seq.data.resize(static_cast<Eigen::Index>(spec.frames), static_cast<Eigen::Index>(n));
  for (std::size_t t = 0; t < spec.frames; ++t)
    for (std::size_t c = 0; c < n; ++c) seq.data(t, c) = spec.base[c];
  const double two_pi = 2.0 * std::numbers::pi;
  for (const auto& s : spec.sinusoids) {
    if (s.channel >= n) throw ConfigError("synth_motion: sinusoid channel out of range");
    for (std::size_t t = 0; t < spec.frames; ++t)
      seq.data(t, s.channel) += s.amp * std::sin(two_pi * s.freq * t / spec.rate + s.phase);
  }
  for (const auto& b : spec.bumps) {
    if (b.channel >= n) throw ConfigError("synth_motion: bump channel out of range");
    for (std::size_t t = 0; t < spec.frames; ++t) {
      const double d = (t / spec.rate - b.center) / b.width;
      seq.data(t, b.channel) += b.amp * std::exp(-0.5 * d * d);
    }
  }
  if (spec.noise > 0.0)
    for (std::size_t t = 0; t < spec.frames; ++t)
      for (std::size_t c = 0; c < n; ++c) seq.data(t, c) += spec.noise * rng.normal();
  normalize_gravity_rows(seq.data, seq.channels_with_role(ChannelRole::gravity));
  return seq;
}

MotionSpec random_motion_spec(const MotionLayout& layout, const std::string& name, std::size_t frames, Rng& rng) {
  MotionSpec spec;
  spec.name = name;
  spec.frames = frames;
  spec.channels = layout.channels;
  spec.base = layout.rest;
  spec.mirror_x = layout.mirror_x;
  spec.mirror_y = layout.mirror_y;
  spec.noise = 0.002;
  const double duration = static_cast<double>(frames) / spec.rate;
  const double f0 = rng.uniform(0.8, 2.2);
  const double pi = std::numbers::pi;

  for (std::size_t c = 0; c < layout.channels.size(); ++c) {
    const auto& ch = layout.channels[c];
    double amp = 0.0;
    switch (ch.role) {
      case ChannelRole::foot:
        amp = ch.axis == 'x' ? 0.08 : ch.axis == 'z' ? 0.05 : 0.02;
        break;
      case ChannelRole::gravity:
        amp = ch.axis == 'z' ? 0.0 : 0.06;
        break;
      case ChannelRole::height:
        amp = 0.02;
        break;
      case ChannelRole::joint:
        amp = 0.3;
        break;
      case ChannelRole::lin_vel:
      case ChannelRole::ang_vel:
        amp = 0.2;
        break;
      case ChannelRole::other:
        amp = 0.05;
        break;
    }
    if (amp == 0.0) continue;
    // Gait-like phase offsets: pairs of limbs in anti-phase.
    const double phase = (c / 3 % 2 == 0 ? 0.0 : pi) + rng.uniform(-0.3, 0.3);
    spec.sinusoids.push_back({c, f0, amp * rng.uniform(0.6, 1.4), phase});
    spec.sinusoids.push_back({c, 2.0 * f0, 0.3 * amp * rng.uniform(0.0, 1.0), rng.uniform(0.0, 2.0 * pi)});
    if (rng.uniform() < 0.25) {
      spec.sinusoids.push_back({c, rng.uniform(2.5, 4.0), 0.3 * amp, rng.uniform(0.0, 2.0 * pi)});
    }
  }
  const std::size_t bumps = 1 + rng.below(3);
  for (std::size_t b = 0; b < bumps; ++b) {
    const std::size_t c = rng.below(layout.channels.size());
    if (layout.channels[c].role == ChannelRole::gravity && layout.channels[c].axis == 'z') continue;
    const double scale_ref = layout.channels[c].role == ChannelRole::joint ? 0.4 : 0.08;
    spec.bumps.push_back({c, rng.uniform(0.1, 0.9) * duration, rng.uniform(0.1, 0.4), rng.uniform(-1.0, 1.0) * scale_ref});
  }
  return spec;
}

std::vector<MotionSequence> synth_corpus(const MotionLayout& layout, std::size_t count, std::size_t frames,
                                         std::uint64_t seed) {
  Rng rng(seed);
  std::vector<MotionSequence> out;
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%s_%02zu", layout.name.c_str(), i);
    Rng child = rng.split();
    MotionSpec spec = random_motion_spec(layout, name, frames, child);
    out.push_back(synth_motion(spec, child));
  }
  return out;
}

std::string component_name(Component c) {
  switch (c) {
    case Component::joint:
      return "joint";
    case Component::pose:
      return "pose";
    case Component::twist:
      return "twist";
    case Component::none:
      break;
  }
  return "none";
}

namespace {

// Rest pose of the bundled layout whose channels match, zeros otherwise.
Eigen::VectorXd rest_pose(const MotionSequence& seq) {
  const std::size_t n = seq.channel_count();
  std::optional<MotionLayout> layout;
  if (n == 16) layout = quadruped_layout();
  if (n > 9 && (n - 9) % 3 == 0) layout = humanoid_layout((n - 9) / 3);
  Eigen::VectorXd rest = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (layout && layout->channels == seq.channels)
    for (std::size_t c = 0; c < n; ++c) rest(static_cast<Eigen::Index>(c)) = layout->rest[c];
  return rest;
}

}  // namespace

SupervisedPair synth_retarget(const MotionSequence& seq, const RetargetConfig& cfg) {
  SupervisedPair pair;
  pair.name = seq.name;
  pair.input = seq;
  const std::size_t n = seq.channel_count();
  const std::size_t frames = seq.frames();
  std::vector<Component> base_layout(n);
  for (std::size_t c = 0; c < n; ++c) base_layout[c] = component_for_role(seq.channels[c].role);

  if (cfg.identity) {
    pair.target = seq.data;
    pair.layout = base_layout;
    return pair;
  }
  if (cfg.lag == 0) throw ConfigError("synth_retarget: lag must be at least 1");
  if (!(cfg.warp_scale > 0.0) || !(cfg.warp_amp >= 0.0 && cfg.warp_amp < 1.0))
    throw ConfigError("synth_retarget: warp_scale must be positive and warp_amp in [0, 1)");

  Rng rng(mix64(cfg.seed) ^ n);
  const Eigen::MatrixXd q = random_orthogonal(n, rng);
  const std::size_t twist_dims = cfg.twist ? std::min<std::size_t>(6, n) : 0;
  const Eigen::MatrixXd p = random_orthogonal(n, rng).topRows(static_cast<Eigen::Index>(twist_dims));
  const std::size_t out_dims = n + twist_dims;
  std::vector<double> offsets(out_dims);
  for (auto& o : offsets) o = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(1.5, 2.5) * cfg.offset;

  const Eigen::VectorXd centre = q * rest_pose(seq);
  const double vel_scale = seq.rate / static_cast<double>(cfg.lag);
  // Soft hinge; slope 1 + a tanh((y - c) / s) stays in (1 - a, 1 + a).
  auto warp = [&](double y, double c, double s) {
    const double u = std::abs(y - c) / s;
    const double log_cosh = u + std::log1p(std::exp(-2.0 * u)) - std::numbers::ln2;
    return y + cfg.warp_amp * s * log_cosh;
  };
  pair.target.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(out_dims));
  for (std::size_t t = 0; t < frames; ++t) {
    const auto past = static_cast<Eigen::Index>(t >= cfg.lag ? t - cfg.lag : 0);
    const Eigen::VectorXd s = seq.data.row(static_cast<Eigen::Index>(t)).transpose();
    const Eigen::VectorXd d = s - seq.data.row(past).transpose();
    const Eigen::VectorXd y = q * (s + cfg.gain * d);
    for (std::size_t c = 0; c < n; ++c) pair.target(t, c) = warp(y(c), centre(c), cfg.warp_scale) + offsets[c];
    if (twist_dims) {
      const Eigen::VectorXd v = p * (d * vel_scale);
      for (std::size_t c = 0; c < twist_dims; ++c)
        pair.target(t, n + c) = warp(v(c), 0.0, cfg.warp_scale * vel_scale) + offsets[n + c];
    }
  }
  pair.layout = base_layout;
  pair.layout.insert(pair.layout.end(), twist_dims, Component::twist);
  return pair;
}

SupervisedPair mirror_pair(const SupervisedPair& pair, MirrorAxis axis, const RetargetConfig& cfg) {
  return synth_retarget(mirror(pair.input, axis), cfg);
}

std::string reflection_name(Reflection r) {
  switch (r) {
    case Reflection::none:
      return "none";
    case Reflection::x:
      return "x";
    case Reflection::y:
      return "y";
    case Reflection::xy:
      return "xy";
  }
  return "none";
}

Reflection parse_reflection(const std::string& name) {
  if (name == "none") return Reflection::none;
  if (name == "x") return Reflection::x;
  if (name == "y") return Reflection::y;
  if (name == "xy") return Reflection::xy;
  throw ConfigError("unknown reflection '" + name + "' (expected none, x, y or xy)");
}

std::vector<MotionSequence> augment(const std::vector<MotionSequence>& motions, const AugmentSpec& spec) {
  if (spec.reflections.empty() || spec.scales.empty()) throw ConfigError("augment: empty reflection or scale set");
  std::vector<MotionSequence> out;
  for (const auto& m : motions) {
    for (auto r : spec.reflections) {
      MotionSequence reflected = m;
      if (r == Reflection::x || r == Reflection::xy) reflected = mirror(reflected, MirrorAxis::x);
      if (r == Reflection::y || r == Reflection::xy) reflected = mirror(reflected, MirrorAxis::y);
      for (double s : spec.scales) {
        MotionSequence v = scale_height(reflected, s);
        char suffix[64];
        std::snprintf(suffix, sizeof suffix, "_r%s_s%g", reflection_name(r).c_str(), s);
        v.name = m.name + suffix;
        out.push_back(std::move(v));
      }
    }
  }
  return out;
}

}  // namespace mdme
