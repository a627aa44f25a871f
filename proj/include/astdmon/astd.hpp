#pragma once

// Interpreting runtime for the three ASTD operators the monitor is composed
// from: automaton, flow and quantified interleave.
//
// A composition is a tree of AstdNode values whose guards, actions and
// attribute initializers are referenced by name and resolved against a
// Registry at build time. Executing an event walks the instance tree; every
// node sees its own attributes plus those of its ancestors, and within one
// step transition actions run before the enclosing node actions.

#include <any>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <typeinfo>
#include <utility>
#include <variant>
#include <vector>

namespace astdmon::astd {

class AstdError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BuildError : public AstdError {
 public:
  using AstdError::AstdError;
};

class DispatchError : public AstdError {
 public:
  using AstdError::AstdError;
};

using ParamValue = std::variant<std::int64_t, double, std::string>;

inline std::string to_string(const ParamValue& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  return std::to_string(std::get<double>(v));
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

struct EventMessage {
  std::string label;
  std::vector<std::pair<std::string, ParamValue>> payload;

  EventMessage() = default;
  explicit EventMessage(std::string l) : label(std::move(l)) {}

  EventMessage& with(std::string name, ParamValue value) {
    payload.emplace_back(std::move(name), std::move(value));
    return *this;
  }

  const ParamValue* find(std::string_view name) const noexcept {
    for (const auto& [key, value] : payload) {
      if (key == name) return &value;
    }
    return nullptr;
  }

  template <typename T>
  const T& get(std::string_view name) const {
    const ParamValue* v = find(name);
    if (v == nullptr) throw DispatchError("event '" + label + "' has no parameter '" + std::string(name) + "'");
    const T* typed = std::get_if<T>(v);
    if (typed == nullptr) throw DispatchError("event parameter '" + std::string(name) + "' has the wrong type");
    return *typed;
  }
};

// ---------------------------------------------------------------------------
// Attributes and scopes
// ---------------------------------------------------------------------------

class AttributeStore {
 public:
  bool contains(std::string_view name) const noexcept { return find(name) != nullptr; }

  std::any* find(std::string_view name) noexcept {
    for (auto& [key, value] : entries_) {
      if (key == name) return &value;
    }
    return nullptr;
  }
  const std::any* find(std::string_view name) const noexcept {
    return const_cast<AttributeStore*>(this)->find(name);
  }

  void set(std::string name, std::any value) {
    if (std::any* slot = find(name)) {
      *slot = std::move(value);
    } else {
      entries_.emplace_back(std::move(name), std::move(value));
    }
  }

  template <typename T>
  T& get(std::string_view name) {
    std::any* slot = find(name);
    if (slot == nullptr) throw AstdError("unknown attribute '" + std::string(name) + "'");
    T* typed = std::any_cast<T>(slot);
    if (typed == nullptr) throw AstdError("attribute '" + std::string(name) + "' has a different type");
    return *typed;
  }
  template <typename T>
  const T& get(std::string_view name) const {
    return const_cast<AttributeStore*>(this)->get<T>(name);
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<std::pair<std::string, std::any>>& entries() const noexcept { return entries_; }

 private:
  std::vector<std::pair<std::string, std::any>> entries_;
};

// One link of the lexical scope chain built on the stack while stepping.
struct Frame {
  AttributeStore* attributes = nullptr;
  const std::string* bound_name = nullptr;
  const ParamValue* bound_value = nullptr;
  const Frame* parent = nullptr;
};

class Scope {
 public:
  explicit Scope(const Frame* innermost) : innermost_(innermost) {}

  template <typename T>
  T& get(std::string_view name) const {
    for (const Frame* f = innermost_; f != nullptr; f = f->parent) {
      if (f->attributes == nullptr) continue;
      if (std::any* slot = f->attributes->find(name)) {
        T* typed = std::any_cast<T>(slot);
        if (typed == nullptr) throw AstdError("attribute '" + std::string(name) + "' has a different type");
        return *typed;
      }
    }
    throw AstdError("attribute '" + std::string(name) + "' is not visible in this scope");
  }

  bool has(std::string_view name) const noexcept {
    for (const Frame* f = innermost_; f != nullptr; f = f->parent) {
      if (f->attributes != nullptr && f->attributes->contains(name)) return true;
    }
    return false;
  }

  // Value of a quantified variable bound by an enclosing interleave.
  const ParamValue* binding(std::string_view name) const noexcept {
    for (const Frame* f = innermost_; f != nullptr; f = f->parent) {
      if (f->bound_name != nullptr && *f->bound_name == name) return f->bound_value;
    }
    return nullptr;
  }

 private:
  const Frame* innermost_;
};

using Guard = std::function<bool(const EventMessage&, const Scope&)>;
using Action = std::function<void(const EventMessage&, const Scope&)>;
using Initializer = std::function<std::any(const Scope&)>;

class Registry {
 public:
  Registry& guard(std::string name, Guard fn) {
    guards_[std::move(name)] = std::move(fn);
    return *this;
  }
  Registry& action(std::string name, Action fn) {
    actions_[std::move(name)] = std::move(fn);
    return *this;
  }
  Registry& initializer(std::string name, Initializer fn) {
    initializers_[std::move(name)] = std::move(fn);
    return *this;
  }

  const Guard* find_guard(const std::string& n) const { return lookup(guards_, n); }
  const Action* find_action(const std::string& n) const { return lookup(actions_, n); }
  const Initializer* find_initializer(const std::string& n) const { return lookup(initializers_, n); }

 private:
  template <typename Map>
  static const typename Map::mapped_type* lookup(const Map& m, const std::string& n) {
    const auto it = m.find(n);
    return it == m.end() ? nullptr : &it->second;
  }

  std::map<std::string, Guard> guards_;
  std::map<std::string, Action> actions_;
  std::map<std::string, Initializer> initializers_;
};

// ---------------------------------------------------------------------------
// Composition tree
// ---------------------------------------------------------------------------

enum class NodeKind { automaton, flow, interleave };

struct AttributeDecl {
  std::string name;
  std::string initializer;
};

struct Transition {
  std::string from;
  std::string to;
  std::string label;
  std::string guard;   // empty: unguarded
  std::string action;  // empty: no transition action
};

struct AstdNode {
  NodeKind kind = NodeKind::automaton;
  std::string name;
  std::vector<AttributeDecl> attributes;
  std::string node_action;

  std::vector<std::string> states;
  std::string initial;
  std::vector<Transition> transitions;

  std::string variable;
  std::vector<AstdNode> children;

  AstdNode&& with_attribute(std::string attr, std::string initializer) && {
    attributes.push_back({std::move(attr), std::move(initializer)});
    return std::move(*this);
  }
  AstdNode&& with_action(std::string action) && {
    node_action = std::move(action);
    return std::move(*this);
  }
};

inline AstdNode automaton(std::string name, std::vector<std::string> states, std::string initial,
                          std::vector<Transition> transitions) {
  AstdNode n;
  n.kind = NodeKind::automaton;
  n.name = std::move(name);
  n.states = std::move(states);
  n.initial = std::move(initial);
  n.transitions = std::move(transitions);
  return n;
}

inline AstdNode flow(std::string name, AstdNode left, AstdNode right) {
  AstdNode n;
  n.kind = NodeKind::flow;
  n.name = std::move(name);
  n.children.push_back(std::move(left));
  n.children.push_back(std::move(right));
  return n;
}

inline AstdNode interleave(std::string name, std::string variable, AstdNode child) {
  AstdNode n;
  n.kind = NodeKind::interleave;
  n.name = std::move(name);
  n.variable = std::move(variable);
  n.children.push_back(std::move(child));
  return n;
}

// ---------------------------------------------------------------------------
// Execution report
// ---------------------------------------------------------------------------

struct FiredTransition {
  std::string_view node;
  std::string_view label;
  std::string_view from;
  std::string_view to;
};

struct ActionRun {
  enum class Kind { transition, node };
  Kind kind;
  std::string_view node;
  std::string_view action;
};

struct StepReport {
  bool executed = false;
  std::vector<FiredTransition> fired;
  std::vector<ActionRun> actions;
};

// Called on an interleave child after it executed; returning true drops it.
using EvictionHook = std::function<bool(const ParamValue& key, const class Instance& child)>;

// ---------------------------------------------------------------------------
// Compiled program
// ---------------------------------------------------------------------------

namespace detail {

struct CompiledTransition {
  std::size_t from = 0;
  std::size_t to = 0;
  std::string label;
  const Guard* guard = nullptr;
  const Action* action = nullptr;
  std::string action_name;
};

struct CompiledNode {
  NodeKind kind = NodeKind::automaton;
  std::string name;
  std::vector<std::pair<std::string, const Initializer*>> attributes;
  const Action* node_action = nullptr;
  std::string node_action_name;
  std::vector<std::string> states;
  std::size_t initial = 0;
  std::vector<CompiledTransition> transitions;
  std::string variable;
  std::vector<CompiledNode> children;
};

struct Program {
  Registry registry;
  CompiledNode root;
};

inline std::size_t state_index(const AstdNode& spec, const std::string& state) {
  for (std::size_t i = 0; i < spec.states.size(); ++i) {
    if (spec.states[i] == state) return i;
  }
  throw BuildError("automaton '" + spec.name + "' has no state '" + state + "'");
}

inline CompiledNode compile(const AstdNode& spec, const Registry& registry) {
  CompiledNode out;
  out.kind = spec.kind;
  out.name = spec.name;

  for (const auto& attr : spec.attributes) {
    for (const auto& [existing, init] : out.attributes) {
      if (existing == attr.name) {
        throw BuildError("duplicate attribute '" + attr.name + "' in node '" + spec.name + "'");
      }
    }
    const Initializer* init = registry.find_initializer(attr.initializer);
    if (init == nullptr) {
      throw BuildError("unresolved initializer '" + attr.initializer + "' for attribute '" + attr.name + "'");
    }
    out.attributes.emplace_back(attr.name, init);
  }
  if (!spec.node_action.empty()) {
    out.node_action = registry.find_action(spec.node_action);
    if (out.node_action == nullptr) {
      throw BuildError("unresolved action '" + spec.node_action + "' in node '" + spec.name + "'");
    }
    out.node_action_name = spec.node_action;
  }

  switch (spec.kind) {
    case NodeKind::automaton: {
      if (spec.states.empty()) throw BuildError("automaton '" + spec.name + "' has no states");
      if (!spec.children.empty()) throw BuildError("automaton '" + spec.name + "' cannot have children");
      out.states = spec.states;
      out.initial = state_index(spec, spec.initial);
      for (const auto& t : spec.transitions) {
        CompiledTransition ct;
        ct.from = state_index(spec, t.from);
        ct.to = state_index(spec, t.to);
        ct.label = t.label;
        if (!t.guard.empty()) {
          ct.guard = registry.find_guard(t.guard);
          if (ct.guard == nullptr) throw BuildError("unresolved guard '" + t.guard + "' in node '" + spec.name + "'");
        }
        if (!t.action.empty()) {
          ct.action = registry.find_action(t.action);
          if (ct.action == nullptr) throw BuildError("unresolved action '" + t.action + "' in node '" + spec.name + "'");
          ct.action_name = t.action;
        }
        out.transitions.push_back(std::move(ct));
      }
      break;
    }
    case NodeKind::flow:
      if (spec.children.size() != 2) throw BuildError("flow '" + spec.name + "' needs exactly two children");
      break;
    case NodeKind::interleave:
      if (spec.children.size() != 1) throw BuildError("interleave '" + spec.name + "' needs exactly one child");
      if (spec.variable.empty()) throw BuildError("interleave '" + spec.name + "' needs a quantified variable");
      out.variable = spec.variable;
      break;
  }
  for (const auto& child : spec.children) out.children.push_back(compile(child, registry));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Instances
// ---------------------------------------------------------------------------

class Instance {
 public:
  Instance(const detail::CompiledNode* node, const Frame* parent) : node_(node) {
    initialize_attributes(parent);
    if (node_->kind == NodeKind::automaton) {
      state_ = node_->initial;
    } else if (node_->kind == NodeKind::flow) {
      const Frame self = frame(parent);
      children_.reserve(2);
      children_.emplace_back(&node_->children[0], &self);
      children_.emplace_back(&node_->children[1], &self);
    }
  }

  NodeKind kind() const noexcept { return node_->kind; }
  const std::string& name() const noexcept { return node_->name; }
  AttributeStore& attributes() noexcept { return attributes_; }
  const AttributeStore& attributes() const noexcept { return attributes_; }

  const std::string& state() const { return node_->states.at(state_); }

  // Flow: [left, right]. Interleave: children in creation order.
  const std::vector<Instance>& children() const noexcept { return children_; }
  std::vector<Instance>& children() noexcept { return children_; }
  const std::vector<ParamValue>& keys() const noexcept { return keys_; }

  const Instance* find_child(const ParamValue& key) const {
    const auto it = index_.find(key);
    return it == index_.end() ? nullptr : &children_[it->second];
  }
  Instance* find_child(const ParamValue& key) {
    const auto it = index_.find(key);
    return it == index_.end() ? nullptr : &children_[it->second];
  }

  bool evict(const ParamValue& key) {
    const auto it = index_.find(key);
    if (it == index_.end()) return false;
    const std::size_t pos = it->second;
    index_.erase(it);
    if (pos + 1 != children_.size()) {
      children_[pos] = std::move(children_.back());
      keys_[pos] = std::move(keys_.back());
      index_[keys_[pos]] = pos;
    }
    children_.pop_back();
    keys_.pop_back();
    return true;
  }

  // Creates (or returns) the interleave child for `key`, running its
  // attribute initializers.
  Instance& ensure_child(const ParamValue& key, const Frame* parent) {
    if (Instance* existing = find_child(key)) return *existing;
    const Frame self = bound_frame(parent, key);
    return adopt(key, Instance(&node_->children[0], &self));
  }

  bool can_execute(const EventMessage& ev, const Frame* parent) const {
    auto& self_mut = const_cast<Instance&>(*this);
    const Frame self = self_mut.frame(parent);
    switch (node_->kind) {
      case NodeKind::automaton:
        return self_mut.enabled_transition(ev, self) != nullptr;
      case NodeKind::flow:
        return children_[0].can_execute(ev, &self) || children_[1].can_execute(ev, &self);
      case NodeKind::interleave: {
        const ParamValue& key = quantified_value(ev);
        const Frame bound = self_mut.bound_frame(parent, key);
        if (const Instance* child = find_child(key)) return child->can_execute(ev, &bound);
        const Instance fresh(&node_->children[0], &bound);
        return fresh.can_execute(ev, &bound);
      }
    }
    return false;
  }

  bool step(const EventMessage& ev, const Frame* parent, StepReport* report, const EvictionHook* hook) {
    const Frame self = frame(parent);
    bool executed = false;
    switch (node_->kind) {
      case NodeKind::automaton: {
        const detail::CompiledTransition* t = enabled_transition(ev, self);
        if (t == nullptr) return false;
        if (report != nullptr) {
          report->fired.push_back({node_->name, t->label, node_->states[t->from], node_->states[t->to]});
        }
        if (t->action != nullptr) {
          if (report != nullptr) report->actions.push_back({ActionRun::Kind::transition, node_->name, t->action_name});
          (*t->action)(ev, Scope(&self));
        }
        state_ = t->to;
        executed = true;
        break;
      }
      case NodeKind::flow: {
        // Left child first; the right child's guards see the left's effects.
        const bool left = children_[0].step(ev, &self, report, hook);
        const bool right = children_[1].step(ev, &self, report, hook);
        executed = left || right;
        break;
      }
      case NodeKind::interleave: {
        const ParamValue& key = quantified_value(ev);
        const Frame bound = bound_frame(parent, key);
        if (Instance* child = find_child(key)) {
          executed = child->step(ev, &bound, report, hook);
        } else {
          Instance fresh(&node_->children[0], &bound);
          executed = fresh.step(ev, &bound, report, hook);
          if (executed) adopt(key, std::move(fresh));
        }
        if (executed && hook != nullptr && *hook) {
          if (const Instance* child = find_child(key); child != nullptr && (*hook)(key, *child)) {
            const ParamValue owned = key;
            evict(owned);
          }
        }
        break;
      }
    }
    if (executed && node_->node_action != nullptr) {
      if (report != nullptr) report->actions.push_back({ActionRun::Kind::node, node_->name, node_->node_action_name});
      (*node_->node_action)(ev, Scope(&self));
    }
    return executed;
  }

 private:
  Frame frame(const Frame* parent) { return Frame{&attributes_, nullptr, nullptr, parent}; }

  Frame bound_frame(const Frame* parent, const ParamValue& key) {
    return Frame{&attributes_, &node_->variable, &key, parent};
  }

  const ParamValue& quantified_value(const EventMessage& ev) const {
    const ParamValue* v = ev.find(node_->variable);
    if (v == nullptr) {
      throw DispatchError("event '" + ev.label + "' lacks quantified variable '" + node_->variable +
                          "' required by '" + node_->name + "'");
    }
    return *v;
  }

  const detail::CompiledTransition* enabled_transition(const EventMessage& ev, const Frame& self) {
    for (const auto& t : node_->transitions) {
      if (t.from != state_ || t.label != ev.label) continue;
      if (t.guard == nullptr || (*t.guard)(ev, Scope(&self))) return &t;
    }
    return nullptr;
  }

  void initialize_attributes(const Frame* parent) {
    for (const auto& [attr, init] : node_->attributes) {
      const Frame partial{&attributes_, nullptr, nullptr, parent};
      attributes_.set(attr, (*init)(Scope(&partial)));
    }
  }

  Instance& adopt(const ParamValue& key, Instance&& child) {
    index_.emplace(key, children_.size());
    keys_.push_back(key);
    children_.push_back(std::move(child));
    return children_.back();
  }

  const detail::CompiledNode* node_;
  AttributeStore attributes_;
  std::size_t state_ = 0;
  std::vector<Instance> children_;
  std::vector<ParamValue> keys_;
  std::map<ParamValue, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Runtime: a built composition plus its root instance.
// ---------------------------------------------------------------------------

class Runtime {
 public:
  static Runtime build(const AstdNode& spec, Registry registry) {
    auto program = std::make_shared<detail::Program>();
    program->registry = std::move(registry);
    program->root = detail::compile(spec, program->registry);
    return Runtime(std::move(program));
  }

  bool can_execute(const EventMessage& ev) const { return root_.can_execute(ev, nullptr); }

  StepReport step(const EventMessage& ev) {
    StepReport report;
    report.executed = root_.step(ev, nullptr, &report, &eviction_hook_);
    return report;
  }

  // Same as step() without collecting a report.
  bool step_quiet(const EventMessage& ev) { return root_.step(ev, nullptr, nullptr, &eviction_hook_); }

  void set_eviction_hook(EvictionHook hook) { eviction_hook_ = std::move(hook); }

  // Child of the root interleave for `key`, created with initializers if new.
  Instance& instantiate(const ParamValue& key) {
    if (root_.kind() != NodeKind::interleave) throw AstdError("root is not a quantified interleave");
    return root_.ensure_child(key, nullptr);
  }

  Instance& root() noexcept { return root_; }
  const Instance& root() const noexcept { return root_; }

 private:
  explicit Runtime(std::shared_ptr<const detail::Program> program)
      : program_(std::move(program)), root_(&program_->root, nullptr) {}

  std::shared_ptr<const detail::Program> program_;
  Instance root_;
  EvictionHook eviction_hook_;
};

}  // namespace astdmon::astd
