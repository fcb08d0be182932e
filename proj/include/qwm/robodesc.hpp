#pragma once

// Text robot-description format: parsing, validation, serialization.
//
//   <robot name="...">
//     <meta knee_config="0|1" base="link-name"/>
//     <link name="..." mass="kg" offset="x y z"/>
//     <joint name="..." parent="..." child="..." effort="Nm"
//            actuated="true|false" leg="FL|FR|RL|RR|none" role="haa|hfe|kfe|none"/>
//   </robot>
//
// Whitespace-insensitive, attribute order free, <!-- --> comments allowed.

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qwm/common.hpp"

namespace qwm::robodesc {

struct SyntaxError : Error {
  using Error::Error;
};
struct SemanticError : Error {
  using Error::Error;
};

enum class LegLabel { FL, FR, RL, RR, None };
enum class ChainRole { Haa, Hfe, Kfe, None };

inline const char* to_string(LegLabel l) {
  switch (l) {
    case LegLabel::FL: return "FL";
    case LegLabel::FR: return "FR";
    case LegLabel::RL: return "RL";
    case LegLabel::RR: return "RR";
    default: return "none";
  }
}
inline const char* to_string(ChainRole r) {
  switch (r) {
    case ChainRole::Haa: return "haa";
    case ChainRole::Hfe: return "hfe";
    case ChainRole::Kfe: return "kfe";
    default: return "none";
  }
}

struct LinkSpec {
  std::string name;
  double mass = 0.0;                            // kg, >= 0
  std::array<double, 3> parent_offset{0, 0, 0};  // joint frame in parent frame, m

  bool operator==(const LinkSpec&) const = default;
};

struct JointSpec {
  std::string name;
  std::string parent;
  std::string child;
  double effort_limit = 0.0;  // Nm, > 0 when actuated
  bool actuated = false;
  LegLabel leg_label = LegLabel::None;
  ChainRole chain_role = ChainRole::None;

  bool operator==(const JointSpec&) const = default;
};

struct RobotDescription {
  std::string name;
  std::vector<LinkSpec> links;
  std::vector<JointSpec> joints;
  int knee_config = 0;  // 0 = dog, 1 = X
  std::string base_link;

  const LinkSpec* find_link(const std::string& n) const {
    for (const auto& l : links)
      if (l.name == n) return &l;
    return nullptr;
  }
  const JointSpec* find_joint(LegLabel leg, ChainRole role) const {
    for (const auto& j : joints)
      if (j.leg_label == leg && j.chain_role == role) return &j;
    return nullptr;
  }
};

namespace detail {

struct Attr {
  std::string key, value;
  int line;
};

struct Element {
  std::string tag;
  std::vector<Attr> attrs;
  int line;
  bool self_closed = false;
  bool closing = false;

  const std::string* get(const std::string& key) const {
    for (const auto& a : attrs)
      if (a.key == key) return &a.value;
    return nullptr;
  }
  const std::string& require(const std::string& key) const {
    if (const auto* v = get(key)) return *v;
    throw SyntaxError("line " + std::to_string(line) + ": <" + tag +
                      "> missing attribute '" + key + "'");
  }
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) : s_(text) {}

  // returns elements in document order
  std::vector<Element> run() {
    std::vector<Element> out;
    for (;;) {
      skip_space_and_comments();
      if (pos_ >= s_.size()) break;
      if (s_[pos_] != '<')
        fail("expected '<'");
      out.push_back(element());
    }
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw SyntaxError("line " + std::to_string(line_) + ": " + msg);
  }

  void advance() {
    if (s_[pos_] == '\n') ++line_;
    ++pos_;
  }

  void skip_space_and_comments() {
    for (;;) {
      while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) advance();
      if (pos_ + 3 < s_.size() && s_.substr(pos_, 4) == "<!--") {
        std::size_t end = s_.find("-->", pos_ + 4);
        if (end == std::string_view::npos) fail("unterminated comment");
        while (pos_ < end + 3) advance();
        continue;
      }
      return;
    }
  }

  std::string ident() {
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      advance();
    if (pos_ == start) fail("expected identifier");
    return std::string(s_.substr(start, pos_ - start));
  }

  Element element() {
    Element e;
    e.line = line_;
    advance();  // '<'
    if (pos_ < s_.size() && s_[pos_] == '/') {
      advance();
      e.closing = true;
    }
    e.tag = ident();
    for (;;) {
      skip_space_and_comments();
      if (pos_ >= s_.size()) fail("unterminated element <" + e.tag + ">");
      if (s_[pos_] == '>') {
        advance();
        return e;
      }
      if (s_[pos_] == '/') {
        advance();
        if (pos_ >= s_.size() || s_[pos_] != '>') fail("expected '>' after '/'");
        advance();
        e.self_closed = true;
        return e;
      }
      Attr a;
      a.line = line_;
      a.key = ident();
      skip_space_and_comments();
      if (pos_ >= s_.size() || s_[pos_] != '=') fail("expected '=' after attribute '" + a.key + "'");
      advance();
      skip_space_and_comments();
      if (pos_ < s_.size() && (s_[pos_] == '"' || s_[pos_] == '\'')) {
        char q = s_[pos_];
        advance();
        std::size_t start = pos_;
        while (pos_ < s_.size() && s_[pos_] != q) advance();
        if (pos_ >= s_.size()) fail("unterminated string for attribute '" + a.key + "'");
        a.value = std::string(s_.substr(start, pos_ - start));
        advance();
      } else {
        std::size_t start = pos_;
        while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])) &&
               s_[pos_] != '>' && s_[pos_] != '/')
          advance();
        if (pos_ == start) fail("empty value for attribute '" + a.key + "'");
        a.value = std::string(s_.substr(start, pos_ - start));
      }
      e.attrs.push_back(std::move(a));
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

inline double number(const Element& e, const std::string& key) {
  const std::string& v = e.require(key);
  double out;
  if (!parse_double(v, out) || !std::isfinite(out))
    throw SyntaxError("line " + std::to_string(e.line) + ": <" + e.tag + "> attribute '" +
                      key + "' is not a finite number: '" + v + "'");
  return out;
}

inline std::array<double, 3> vec3(const Element& e, const std::string& key) {
  const std::string& v = e.require(key);
  std::array<double, 3> out{};
  std::size_t idx = 0, pos = 0;
  while (pos < v.size()) {
    while (pos < v.size() && std::isspace(static_cast<unsigned char>(v[pos]))) ++pos;
    if (pos >= v.size()) break;
    std::size_t start = pos;
    while (pos < v.size() && !std::isspace(static_cast<unsigned char>(v[pos]))) ++pos;
    double x;
    if (idx >= 3 || !parse_double(std::string_view(v).substr(start, pos - start), x) ||
        !std::isfinite(x))
      throw SyntaxError("line " + std::to_string(e.line) + ": attribute '" + key +
                        "' must hold exactly 3 finite numbers: '" + v + "'");
    out[idx++] = x;
  }
  if (idx != 3)
    throw SyntaxError("line " + std::to_string(e.line) + ": attribute '" + key +
                      "' must hold exactly 3 finite numbers: '" + v + "'");
  return out;
}

inline void check_known_attrs(const Element& e, std::initializer_list<const char*> known) {
  for (const auto& a : e.attrs) {
    bool ok = false;
    for (const char* k : known) ok = ok || a.key == k;
    if (!ok)
      throw SyntaxError("line " + std::to_string(a.line) + ": <" + e.tag +
                        "> has unknown attribute '" + a.key + "'");
  }
}

}  // namespace detail

inline std::optional<LegLabel> leg_from_string(const std::string& s) {
  if (s == "FL") return LegLabel::FL;
  if (s == "FR") return LegLabel::FR;
  if (s == "RL") return LegLabel::RL;
  if (s == "RR") return LegLabel::RR;
  if (s == "none") return LegLabel::None;
  return std::nullopt;
}
inline std::optional<ChainRole> role_from_string(const std::string& s) {
  if (s == "haa") return ChainRole::Haa;
  if (s == "hfe") return ChainRole::Hfe;
  if (s == "kfe") return ChainRole::Kfe;
  if (s == "none") return ChainRole::None;
  return std::nullopt;
}

// Empty list iff every RobotDescription invariant holds; each violation names
// the offending element and the broken rule.
inline std::vector<std::string> validate_tree(const RobotDescription& d) {
  std::vector<std::string> v;
  std::map<std::string, int> link_count;
  for (const auto& l : d.links) {
    ++link_count[l.name];
    if (!std::isfinite(l.mass) || l.mass < 0)
      v.push_back("link '" + l.name + "': mass must be finite and non-negative");
    for (double c : l.parent_offset)
      if (!std::isfinite(c)) {
        v.push_back("link '" + l.name + "': offset components must be finite");
        break;
      }
  }
  for (const auto& [n, c] : link_count)
    if (c > 1) v.push_back("link '" + n + "': duplicate name");

  std::map<std::string, int> joint_count;
  for (const auto& j : d.joints) ++joint_count[j.name];
  for (const auto& [n, c] : joint_count)
    if (c > 1) v.push_back("joint '" + n + "': duplicate name");

  if (d.knee_config != 0 && d.knee_config != 1)
    v.push_back("meta: knee_config must be 0 or 1");
  if (!link_count.count(d.base_link))
    v.push_back("meta: base link '" + d.base_link + "' does not exist");

  std::map<std::string, int> parent_joints;  // child link -> number of joints targeting it
  for (const auto& j : d.joints) {
    if (!link_count.count(j.parent))
      v.push_back("joint '" + j.name + "': parent link '" + j.parent + "' does not exist");
    if (!link_count.count(j.child))
      v.push_back("joint '" + j.name + "': child link '" + j.child + "' does not exist");
    if (j.actuated && !(j.effort_limit > 0))
      v.push_back("joint '" + j.name + "': actuated joint needs effort_limit > 0");
    ++parent_joints[j.child];
  }
  for (const auto& [n, c] : parent_joints)
    if (c > 1) v.push_back("link '" + n + "': has " + std::to_string(c) + " parent joints");
  if (parent_joints.count(d.base_link))
    v.push_back("link '" + d.base_link + "': base link cannot be a joint child");

  // reachability from base over joints (tree check once parent counts are 1)
  if (link_count.count(d.base_link)) {
    std::set<std::string> seen{d.base_link};
    std::vector<std::string> stack{d.base_link};
    while (!stack.empty()) {
      std::string cur = stack.back();
      stack.pop_back();
      for (const auto& j : d.joints)
        if (j.parent == cur && seen.insert(j.child).second) stack.push_back(j.child);
    }
    for (const auto& l : d.links)
      if (!seen.count(l.name))
        v.push_back("link '" + l.name + "': not reachable from base (cycle or orphan)");
  }

  for (LegLabel leg : {LegLabel::FL, LegLabel::FR, LegLabel::RL, LegLabel::RR}) {
    for (ChainRole role : {ChainRole::Haa, ChainRole::Hfe, ChainRole::Kfe}) {
      int n = 0;
      for (const auto& j : d.joints)
        if (j.leg_label == leg && j.chain_role == role) ++n;
      if (n != 1)
        v.push_back(std::string("leg '") + to_string(leg) + "': needs exactly one " +
                    to_string(role) + " joint, found " + std::to_string(n));
    }
  }
  return v;
}

inline RobotDescription parse_robot_description(const std::string& text) {
  auto elements = detail::Lexer(text).run();
  if (elements.empty()) throw SyntaxError("line 1: empty document");
  const auto& root = elements.front();
  if (root.tag != "robot" || root.closing || root.self_closed)
    throw SyntaxError("line " + std::to_string(root.line) + ": document must open with <robot ...>");
  detail::check_known_attrs(root, {"name"});

  RobotDescription d;
  d.name = root.require("name");
  bool closed = false, meta_seen = false;
  for (std::size_t i = 1; i < elements.size(); ++i) {
    const auto& e = elements[i];
    if (e.closing) {
      if (e.tag != "robot" || i + 1 != elements.size())
        throw SyntaxError("line " + std::to_string(e.line) + ": unexpected </" + e.tag + ">");
      closed = true;
      break;
    }
    if (!e.self_closed)
      throw SyntaxError("line " + std::to_string(e.line) + ": <" + e.tag +
                        "> must be self-closing");
    if (e.tag == "link") {
      detail::check_known_attrs(e, {"name", "mass", "offset"});
      LinkSpec l;
      l.name = e.require("name");
      l.mass = detail::number(e, "mass");
      l.parent_offset = detail::vec3(e, "offset");
      d.links.push_back(std::move(l));
    } else if (e.tag == "joint") {
      detail::check_known_attrs(e, {"name", "parent", "child", "effort", "actuated", "leg", "role"});
      JointSpec j;
      j.name = e.require("name");
      j.parent = e.require("parent");
      j.child = e.require("child");
      j.effort_limit = detail::number(e, "effort");
      const std::string& act = e.require("actuated");
      if (act == "true")
        j.actuated = true;
      else if (act == "false")
        j.actuated = false;
      else
        throw SyntaxError("line " + std::to_string(e.line) + ": actuated must be true|false");
      auto leg = leg_from_string(e.require("leg"));
      if (!leg)
        throw SyntaxError("line " + std::to_string(e.line) + ": leg must be FL|FR|RL|RR|none");
      j.leg_label = *leg;
      auto role = role_from_string(e.require("role"));
      if (!role)
        throw SyntaxError("line " + std::to_string(e.line) + ": role must be haa|hfe|kfe|none");
      j.chain_role = *role;
      d.joints.push_back(std::move(j));
    } else if (e.tag == "meta") {
      detail::check_known_attrs(e, {"knee_config", "base"});
      if (meta_seen)
        throw SyntaxError("line " + std::to_string(e.line) + ": duplicate <meta>");
      meta_seen = true;
      double k = detail::number(e, "knee_config");
      if (k != 0.0 && k != 1.0)
        throw SyntaxError("line " + std::to_string(e.line) + ": knee_config must be 0 or 1");
      d.knee_config = static_cast<int>(k);
      d.base_link = e.require("base");
    } else {
      throw SyntaxError("line " + std::to_string(e.line) + ": unknown element <" + e.tag + ">");
    }
  }
  if (!closed) throw SyntaxError("document missing </robot>");
  if (!meta_seen) throw SyntaxError("document missing <meta> element");

  auto violations = validate_tree(d);
  if (!violations.empty()) {
    std::string msg = "robot '" + d.name + "': ";
    for (std::size_t i = 0; i < violations.size(); ++i)
      msg += (i ? "; " : "") + violations[i];
    throw SemanticError(msg);
  }
  return d;
}

inline std::string serialize(const RobotDescription& d) {
  std::string out = "<robot name=\"" + d.name + "\">\n";
  out += "  <meta knee_config=\"" + std::to_string(d.knee_config) + "\" base=\"" +
         d.base_link + "\"/>\n";
  for (const auto& l : d.links)
    out += "  <link name=\"" + l.name + "\" mass=\"" + fmt_double(l.mass) + "\" offset=\"" +
           fmt_double(l.parent_offset[0]) + " " + fmt_double(l.parent_offset[1]) + " " +
           fmt_double(l.parent_offset[2]) + "\"/>\n";
  for (const auto& j : d.joints)
    out += std::string("  <joint name=\"") + j.name + "\" parent=\"" + j.parent +
           "\" child=\"" + j.child + "\" effort=\"" + fmt_double(j.effort_limit) +
           "\" actuated=\"" + (j.actuated ? "true" : "false") + "\" leg=\"" +
           to_string(j.leg_label) + "\" role=\"" + to_string(j.chain_role) + "\"/>\n";
  out += "</robot>\n";
  return out;
}

}  // namespace qwm::robodesc
