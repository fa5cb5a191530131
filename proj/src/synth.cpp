#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <set>

#include "derail/corpus.hpp"
#include "derail/error.hpp"

namespace derail {

namespace {

struct TypeDesc {
  std::string identifier;
  std::string text;
};

const TypeDesc kAddress{"t_address", "address"};
const TypeDesc kUint{"t_uint256", "uint256"};
const TypeDesc kBool{"t_bool", "bool"};
// Builtin declarations get negative ids, written as their uint32 image.
constexpr std::int64_t kMagicMsgId = 4294967281;  // -15
const TypeDesc kMsg{"t_magic_message", "msg"};
const TypeDesc kBalanceMap{"t_mapping$_t_address_$_t_uint256_$", "mapping(address => uint256)"};
const TypeDesc kAllowanceMap{"t_mapping$_t_address_$_t_mapping$_t_address_$_t_uint256_$_$",
                             "mapping(address => mapping(address => uint256))"};

Json type_json(const TypeDesc& t) {
  Json j;
  j["typeIdentifier"] = t.identifier;
  j["typeString"] = t.text;
  return j;
}

/// Appends Solidity text and builds the matching compact-AST objects. Each
/// builder writes its text first and creates its node last, so `src` spans
/// cover exactly what was written and ids come out in post-order like the
/// compiler's.
class Writer {
 public:
  std::int64_t pos() const { return static_cast<std::int64_t>(text_.size()); }
  void emit(std::string_view s) { text_ += s; }
  void line(int indent, std::string_view s) {
    text_.append(static_cast<std::size_t>(indent) * 4, ' ');
    text_ += s;
    text_ += '\n';
  }
  void indent(int level) { text_.append(static_cast<std::size_t>(level) * 4, ' '); }

  Json node(std::string_view type, std::int64_t start) {
    Json j;
    j["id"] = next_id_++;
    j["nodeType"] = type;
    j["src"] = std::to_string(start) + ":" + std::to_string(pos() - start) + ":0";
    return j;
  }
  Json node_at(std::string_view type, std::int64_t start, std::int64_t length) {
    Json j;
    j["id"] = next_id_++;
    j["nodeType"] = type;
    j["src"] = std::to_string(start) + ":" + std::to_string(length) + ":0";
    return j;
  }

  std::string take_text() { return std::move(text_); }

 private:
  std::string text_;
  std::int64_t next_id_ = 1;
};

// -- expressions -------------------------------------------------------------

Json elementary(Writer& w, const TypeDesc& t) {
  const auto start = w.pos();
  w.emit(t.text);
  Json j = w.node("ElementaryTypeName", start);
  j["name"] = t.text;
  j["typeDescriptions"] = type_json(t);
  return j;
}

Json mapping_type(Writer& w, bool nested) {
  const auto start = w.pos();
  w.emit("mapping(");
  Json key = elementary(w, kAddress);
  w.emit(" => ");
  Json value = nested ? mapping_type(w, false) : elementary(w, kUint);
  w.emit(")");
  Json j = w.node("Mapping", start);
  j["keyType"] = std::move(key);
  j["valueType"] = std::move(value);
  j["typeDescriptions"] = type_json(nested ? kAllowanceMap : kBalanceMap);
  return j;
}

struct Decl {
  std::int64_t id = 0;
  std::string name;
  TypeDesc type;
};

Json identifier(Writer& w, const Decl& decl) {
  const auto start = w.pos();
  w.emit(decl.name);
  Json j = w.node("Identifier", start);
  j["name"] = decl.name;
  j["overloadedDeclarations"] = Json::array();
  j["referencedDeclaration"] = decl.id;
  j["typeDescriptions"] = type_json(decl.type);
  return j;
}

Json msg_sender(Writer& w) {
  const auto start = w.pos();
  Json msg = identifier(w, Decl{kMagicMsgId, "msg", kMsg});
  w.emit(".sender");
  Json j = w.node("MemberAccess", start);
  j["expression"] = std::move(msg);
  j["memberName"] = "sender";
  j["typeDescriptions"] = type_json(kAddress);
  return j;
}

Json index_access(Writer& w, Json base, std::int64_t start, const std::function<Json()>& index,
                  const TypeDesc& result) {
  w.emit("[");
  Json idx = index();
  w.emit("]");
  Json j = w.node("IndexAccess", start);
  j["baseExpression"] = std::move(base);
  j["indexExpression"] = std::move(idx);
  j["typeDescriptions"] = type_json(result);
  return j;
}

Json binary(Writer& w, std::int64_t start, Json lhs, std::string_view op,
            const std::function<Json()>& rhs, const TypeDesc& result) {
  w.emit(" ");
  w.emit(op);
  w.emit(" ");
  Json r = rhs();
  Json j = w.node("BinaryOperation", start);
  j["leftExpression"] = std::move(lhs);
  j["operator"] = op;
  j["rightExpression"] = std::move(r);
  j["typeDescriptions"] = type_json(result);
  return j;
}

Json assignment(Writer& w, std::int64_t start, Json lhs, std::string_view op,
                const std::function<Json()>& rhs, const TypeDesc& result) {
  w.emit(" ");
  w.emit(op);
  w.emit(" ");
  Json r = rhs();
  Json j = w.node("Assignment", start);
  j["leftHandSide"] = std::move(lhs);
  j["operator"] = op;
  j["rightHandSide"] = std::move(r);
  j["typeDescriptions"] = type_json(result);
  return j;
}

// -- statements ---------------------------------------------------------------

Json expression_statement(Writer& w, int indent, const std::function<Json()>& expr) {
  w.indent(indent);
  const auto start = w.pos();
  Json e = expr();
  Json j = w.node("ExpressionStatement", start);
  w.emit(";\n");
  j["expression"] = std::move(e);
  return j;
}

Json return_statement(Writer& w, int indent, std::int64_t return_params,
                      const std::function<Json()>& expr) {
  w.indent(indent);
  const auto start = w.pos();
  w.emit("return ");
  Json e = expr();
  Json j = w.node("Return", start);
  w.emit(";\n");
  j["expression"] = std::move(e);
  j["functionReturnParameters"] = return_params;
  return j;
}

using StatementList = std::function<Json(int indent)>;

Json block(Writer& w, int indent, const std::vector<StatementList>& statements) {
  const auto start = w.pos();
  w.emit("{\n");
  Json stmts = Json::array();
  for (const auto& s : statements) stmts.push_back(s(indent + 1));
  w.indent(indent);
  w.emit("}");
  Json j = w.node("Block", start);
  j["statements"] = std::move(stmts);
  return j;
}

Json if_statement(Writer& w, int indent, const std::function<Json()>& condition,
                  const std::vector<StatementList>& body) {
  w.indent(indent);
  const auto start = w.pos();
  w.emit("if (");
  Json cond = condition();
  w.emit(") ");
  Json then = block(w, indent, body);
  Json j = w.node("IfStatement", start);
  w.emit("\n");
  j["condition"] = std::move(cond);
  j["trueBody"] = std::move(then);
  return j;
}

// -- declarations -------------------------------------------------------------

Json variable_declaration(Writer& w, const std::function<Json()>& type_name, const TypeDesc& type,
                          const std::string& name, bool state, std::string_view visibility,
                          std::int64_t scope, Decl& out) {
  const auto start = w.pos();
  Json tn = type_name();
  if (state && visibility == "public") w.emit(" public");
  if (!name.empty()) w.emit(" ");
  const auto name_at = w.pos();
  w.emit(name);
  Json j = w.node("VariableDeclaration", start);
  j["constant"] = false;
  j["mutability"] = "mutable";
  j["name"] = name;
  j["nameLocation"] = std::to_string(name_at) + ":" + std::to_string(name.size()) + ":0";
  j["scope"] = scope;
  j["stateVariable"] = state;
  j["storageLocation"] = "default";
  j["typeDescriptions"] = type_json(type);
  j["typeName"] = std::move(tn);
  j["visibility"] = std::string(visibility);
  out = Decl{j["id"].get<std::int64_t>(), name, type};
  return j;
}

struct Param {
  std::string name;
  TypeDesc type;
};

Json parameter_list(Writer& w, const std::vector<Param>& params, std::vector<Decl>& decls) {
  const auto start = w.pos();
  w.emit("(");
  Json list = Json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i) w.emit(", ");
    Decl d;
    const TypeDesc& t = params[i].type;
    list.push_back(variable_declaration(w, [&] { return elementary(w, t); }, t, params[i].name,
                                        false, "internal", 0, d));
    decls.push_back(d);
  }
  w.emit(")");
  Json j = w.node("ParameterList", start);
  j["parameters"] = std::move(list);
  return j;
}

// -- contract shape -----------------------------------------------------------

enum class TargetKind { Transfer, SetOwner, Delegate, Mint };
enum class GuardKind { Owner, Allowance };
enum class BenignKind { Getter, BalanceOf, PureAdd, PureMax };

struct BenignSpec {
  BenignKind kind;
  std::string name;
  std::size_t var = 0;  // index into extra vars for getters
};

struct ContractSpec {
  std::string contract_name;
  std::string owner;
  std::string balances;
  std::string allowance;
  std::string supply;
  std::vector<std::string> extra_vars;
  TargetKind target = TargetKind::Transfer;
  GuardKind guard = GuardKind::Owner;
  std::string target_name;
  std::string helper_name;
  std::string from, to, value, new_owner;
  std::vector<BenignSpec> benign;
  std::size_t target_position = 0;
};

const std::vector<std::string> kSyllables = {
    "bal", "tok", "pool", "swap", "vault", "res", "fee", "liq", "pair", "route",
    "stake", "rew", "mint", "share", "lock", "debt", "rate", "cap", "flow", "bond"};

class NamePicker {
 public:
  explicit NamePicker(std::mt19937_64& rng) : rng_(rng) {}

  std::string pick(std::string_view prefix, bool capitalize = false) {
    for (;;) {
      std::uniform_int_distribution<std::size_t> syl(0, kSyllables.size() - 1);
      std::uniform_int_distribution<int> count(1, 2);
      std::string name(prefix);
      const int parts = count(rng_);
      for (int i = 0; i < parts; ++i) {
        std::string s = kSyllables[syl(rng_)];
        if (i > 0 || capitalize || !prefix.empty()) s[0] = static_cast<char>(std::toupper(s[0]));
        name += s;
      }
      if (used_.insert(name).second) return name;
    }
  }

  std::string choose(const std::vector<std::string>& options) {
    std::uniform_int_distribution<std::size_t> d(0, options.size() - 1);
    for (;;) {
      std::string n = options[d(rng_)];
      if (used_.insert(n).second) return n;
    }
  }

 private:
  std::mt19937_64& rng_;
  std::set<std::string> used_;
};

ContractSpec draw_spec(std::mt19937_64& rng) {
  ContractSpec s;
  NamePicker names(rng);
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  s.contract_name = names.pick("", true);
  s.owner = names.choose({"owner", "admin", "governor", "operator"});
  s.balances = names.choose({"balances", "balanceOf", "deposits", "shares"});
  s.allowance = names.choose({"allowance", "allowed", "approvals"});
  s.supply = names.choose({"totalSupply", "totalShares", "reserve"});
  const int extras = uniform(0, 3);
  for (int i = 0; i < extras; ++i) s.extra_vars.push_back(names.pick(""));

  s.target = static_cast<TargetKind>(uniform(0, 3));
  const bool has_from = s.target == TargetKind::Transfer || s.target == TargetKind::Delegate;
  s.guard = has_from && uniform(0, 1) == 1 ? GuardKind::Allowance : GuardKind::Owner;
  switch (s.target) {
    case TargetKind::Transfer: s.target_name = names.pick("transfer"); break;
    case TargetKind::SetOwner: s.target_name = names.pick("set"); break;
    case TargetKind::Delegate:
      s.target_name = names.pick("safeTransfer");
      s.helper_name = names.pick("_execute");
      break;
    case TargetKind::Mint: s.target_name = names.pick("mint"); break;
  }
  s.from = names.choose({"_from", "_src", "from_"});
  s.to = names.choose({"_to", "_dst", "to_"});
  s.value = names.choose({"_value", "_amount", "amount_"});
  s.new_owner = names.choose({"_newOwner", "_account", "newAdmin_"});

  const int benign = uniform(1, 3);
  for (int i = 0; i < benign; ++i) {
    auto kind = static_cast<BenignKind>(uniform(0, 3));
    BenignSpec b{kind, {}, 0};
    switch (kind) {
      case BenignKind::Getter:
        b.name = names.pick("get");
        b.var = static_cast<std::size_t>(uniform(0, static_cast<int>(s.extra_vars.size())));
        break;
      case BenignKind::BalanceOf: b.name = names.pick("view"); break;
      case BenignKind::PureAdd: b.name = names.pick("_add"); break;
      case BenignKind::PureMax: b.name = names.pick("_max"); break;
    }
    s.benign.push_back(std::move(b));
  }
  s.target_position = static_cast<std::size_t>(uniform(0, benign));
  return s;
}

std::string_view kind_name(TargetKind k) {
  switch (k) {
    case TargetKind::Transfer: return "transfer";
    case TargetKind::SetOwner: return "owner change";
    case TargetKind::Delegate: return "transfer forwarded to a private helper";
    case TargetKind::Mint: return "mint";
  }
  return "?";
}

class ContractRenderer {
 public:
  ContractRenderer(const ContractSpec& spec, bool guarded) : s_(spec), guarded_(guarded) {}

  std::pair<std::string, std::string> render(const std::string& path) {
    w_.line(0, "// SPDX-License-Identifier: MIT");
    const auto pragma_at = w_.pos();
    w_.emit("pragma solidity ^0.8.0;");
    Json pragma = w_.node("PragmaDirective", pragma_at);
    pragma["literals"] = {"solidity", "^", "0.8", ".0"};
    w_.emit("\n\n");

    const auto contract_at = w_.pos();
    w_.emit("contract " + s_.contract_name + " {\n");
    Json members = Json::array();
    members.push_back(state_var(kAddress, s_.owner, owner_, [&] { return elementary(w_, kAddress); }));
    members.push_back(state_var(kBalanceMap, s_.balances, balances_, [&] { return mapping_type(w_, false); }));
    members.push_back(state_var(kAllowanceMap, s_.allowance, allowance_, [&] { return mapping_type(w_, true); }));
    members.push_back(state_var(kUint, s_.supply, supply_, [&] { return elementary(w_, kUint); }));
    for (const auto& name : s_.extra_vars) {
      Decl d;
      members.push_back(state_var(kUint, name, d, [&] { return elementary(w_, kUint); }));
      extras_.push_back(d);
    }
    for (std::size_t i = 0; i <= s_.benign.size(); ++i) {
      if (i == s_.target_position) {
        if (s_.target == TargetKind::Delegate) members.push_back(helper_function());
        members.push_back(target_function());
      }
      if (i < s_.benign.size()) members.push_back(benign_function(s_.benign[i]));
    }
    w_.emit("}");
    Json contract = w_.node("ContractDefinition", contract_at);
    w_.emit("\n");
    contract["abstract"] = false;
    contract["baseContracts"] = Json::array();
    contract["contractKind"] = "contract";
    contract["linearizedBaseContracts"] = {contract["id"]};
    contract["name"] = s_.contract_name;
    contract["nodes"] = std::move(members);
    Json unit = w_.node_at("SourceUnit", pragma_at, w_.pos() - pragma_at);
    unit["absolutePath"] = path;
    unit["license"] = "MIT";
    unit["nodes"] = {std::move(pragma), std::move(contract)};
    // The compiler writes keys in sorted order; nlohmann::json sorts too.
    return {w_.take_text(), nlohmann::json::parse(unit.dump()).dump(2) + "\n"};
  }

 private:
  Json state_var(const TypeDesc& type, const std::string& name, Decl& out,
                 const std::function<Json()>& type_name) {
    w_.indent(1);
    Json j = variable_declaration(w_, type_name, type, name, true, "public", 0, out);
    w_.emit(";\n");
    return j;
  }

  struct FunctionShape {
    std::string name;
    std::vector<Param> params;
    std::vector<Param> returns;
    std::string visibility;
    std::string mutability;
  };

  Json function(const FunctionShape& f,
                const std::function<std::vector<StatementList>(const std::vector<Decl>&, std::int64_t)>& body) {
    w_.emit("\n");
    w_.indent(1);
    const auto start = w_.pos();
    w_.emit("function " + f.name);
    std::vector<Decl> params;
    Json plist = parameter_list(w_, f.params, params);
    w_.emit(" " + f.visibility);
    if (f.mutability != "nonpayable") w_.emit(" " + f.mutability);
    Json rlist;
    std::vector<Decl> rets;
    if (f.returns.empty()) {
      w_.emit(" ");
      rlist = w_.node_at("ParameterList", w_.pos(), 0);
      rlist["parameters"] = Json::array();
    } else {
      w_.emit(" returns ");
      rlist = parameter_list(w_, f.returns, rets);
      w_.emit(" ");
    }
    Json b = block(w_, 1, body(params, rlist["id"].get<std::int64_t>()));
    Json j = w_.node("FunctionDefinition", start);
    w_.emit("\n");
    j["body"] = std::move(b);
    j["implemented"] = true;
    j["kind"] = "function";
    j["modifiers"] = Json::array();
    j["name"] = f.name;
    j["parameters"] = std::move(plist);
    j["returnParameters"] = std::move(rlist);
    j["stateMutability"] = f.mutability;
    j["virtual"] = false;
    j["visibility"] = f.visibility;
    return j;
  }

  // balances[<who>] <op> <amount>
  StatementList balance_update(const Decl& who, std::string_view op, const Decl& amount) {
    return [this, who, op = std::string(op), amount](int indent) {
      return expression_statement(w_, indent, [&] {
        const auto start = w_.pos();
        Json lhs = index_access(w_, identifier(w_, balances_), start,
                                [&] { return identifier(w_, who); }, kUint);
        return assignment(w_, start, std::move(lhs), op, [&] { return identifier(w_, amount); }, kUint);
      });
    };
  }

  StatementList plain_update(const Decl& target, std::string_view op, const Decl& source) {
    return [this, target, op = std::string(op), source](int indent) {
      return expression_statement(w_, indent, [&] {
        const auto start = w_.pos();
        Json lhs = identifier(w_, target);
        return assignment(w_, start, std::move(lhs), op, [&] { return identifier(w_, source); },
                          target.type);
      });
    };
  }

  Json guard_condition(const std::vector<Decl>& params) {
    const auto start = w_.pos();
    if (s_.guard == GuardKind::Owner) {
      Json sender = msg_sender(w_);
      return binary(w_, start, std::move(sender), "==", [&] { return identifier(w_, owner_); }, kBool);
    }
    // allowance[from][msg.sender] >= value
    Json inner = index_access(w_, identifier(w_, allowance_), start,
                              [&] { return identifier(w_, params[0]); }, kBalanceMap);
    Json outer = index_access(w_, std::move(inner), start, [&] { return msg_sender(w_); }, kUint);
    return binary(w_, start, std::move(outer), ">=", [&] { return identifier(w_, params[2]); }, kBool);
  }

  std::vector<StatementList> maybe_guarded(const std::vector<Decl>& params,
                                           std::vector<StatementList> body) {
    if (!guarded_) return body;
    return {[this, params, body](int indent) {
      return if_statement(w_, indent, [&] { return guard_condition(params); }, body);
    }};
  }

  Json helper_function() {
    FunctionShape f{s_.helper_name,
                    {{s_.from, kAddress}, {s_.to, kAddress}, {s_.value, kUint}},
                    {},
                    "private",
                    "nonpayable"};
    Json j = function(f, [&](const std::vector<Decl>& p, std::int64_t) {
      return std::vector<StatementList>{balance_update(p[0], "-=", p[2]),
                                        balance_update(p[1], "+=", p[2])};
    });
    helper_id_ = j["id"].get<std::int64_t>();
    return j;
  }

  Json target_function() {
    FunctionShape f{s_.target_name, {}, {}, "public", "nonpayable"};
    switch (s_.target) {
      case TargetKind::Transfer:
      case TargetKind::Delegate:
        f.params = {{s_.from, kAddress}, {s_.to, kAddress}, {s_.value, kUint}};
        break;
      case TargetKind::SetOwner: f.params = {{s_.new_owner, kAddress}}; break;
      case TargetKind::Mint: f.params = {{s_.to, kAddress}, {s_.value, kUint}}; break;
    }
    Json j = function(f, [&](const std::vector<Decl>& p, std::int64_t) {
      std::vector<StatementList> body;
      switch (s_.target) {
        case TargetKind::Transfer:
          body = {balance_update(p[0], "-=", p[2]), balance_update(p[1], "+=", p[2])};
          break;
        case TargetKind::SetOwner: body = {plain_update(owner_, "=", p[0])}; break;
        case TargetKind::Mint:
          body = {balance_update(p[0], "+=", p[1]), plain_update(supply_, "+=", p[1])};
          break;
        case TargetKind::Delegate:
          body = {[this, p](int indent) {
            return expression_statement(w_, indent, [&] {
              const auto start = w_.pos();
              Json callee = identifier(w_, Decl{helper_id_, s_.helper_name,
                                                {"t_function_internal_nonpayable$_t_address_$_t_address_$_t_uint256_$returns$__$",
                                                 "function (address,address,uint256)"}});
              w_.emit("(");
              Json args = Json::array();
              for (std::size_t i = 0; i < 3; ++i) {
                if (i) w_.emit(", ");
                args.push_back(identifier(w_, p[i]));
              }
              w_.emit(")");
              Json call = w_.node("FunctionCall", start);
              call["arguments"] = std::move(args);
              call["expression"] = std::move(callee);
              call["kind"] = "functionCall";
              call["names"] = Json::array();
              call["typeDescriptions"] = type_json({"t_tuple$__$", "tuple()"});
              return call;
            });
          }};
          break;
      }
      return maybe_guarded(p, std::move(body));
    });
    return j;
  }

  Json benign_function(const BenignSpec& b) {
    switch (b.kind) {
      case BenignKind::Getter: {
        const Decl& var = b.var < extras_.size() ? extras_[b.var] : supply_;
        FunctionShape f{b.name, {}, {{"", kUint}}, "public", "view"};
        return function(f, [&](const std::vector<Decl>&, std::int64_t rp) {
          return std::vector<StatementList>{[this, var, rp](int indent) {
            return return_statement(w_, indent, rp, [&] { return identifier(w_, var); });
          }};
        });
      }
      case BenignKind::BalanceOf: {
        FunctionShape f{b.name, {{"_who", kAddress}}, {{"", kUint}}, "public", "view"};
        return function(f, [&](const std::vector<Decl>& p, std::int64_t rp) {
          return std::vector<StatementList>{[this, p, rp](int indent) {
            return return_statement(w_, indent, rp, [&] {
              const auto start = w_.pos();
              return index_access(w_, identifier(w_, balances_), start,
                                  [&] { return identifier(w_, p[0]); }, kUint);
            });
          }};
        });
      }
      case BenignKind::PureAdd: {
        FunctionShape f{b.name, {{"a", kUint}, {"b", kUint}}, {{"", kUint}}, "internal", "pure"};
        return function(f, [&](const std::vector<Decl>& p, std::int64_t rp) {
          return std::vector<StatementList>{[this, p, rp](int indent) {
            return return_statement(w_, indent, rp, [&] {
              const auto start = w_.pos();
              Json lhs = identifier(w_, p[0]);
              return binary(w_, start, std::move(lhs), "+", [&] { return identifier(w_, p[1]); }, kUint);
            });
          }};
        });
      }
      case BenignKind::PureMax: {
        FunctionShape f{b.name, {{"a", kUint}, {"b", kUint}}, {{"", kUint}}, "internal", "pure"};
        return function(f, [&](const std::vector<Decl>& p, std::int64_t rp) {
          StatementList branch = [this, p, rp](int indent) {
            return if_statement(
                w_, indent,
                [&] {
                  const auto start = w_.pos();
                  Json lhs = identifier(w_, p[0]);
                  return binary(w_, start, std::move(lhs), ">", [&] { return identifier(w_, p[1]); }, kBool);
                },
                {[this, p, rp](int inner) {
                  return return_statement(w_, inner, rp, [&] { return identifier(w_, p[0]); });
                }});
          };
          StatementList fallback = [this, p, rp](int indent) {
            return return_statement(w_, indent, rp, [&] { return identifier(w_, p[1]); });
          };
          return std::vector<StatementList>{branch, fallback};
        });
      }
    }
    throw Error(ErrorCode::BadFormat, "unknown benign function kind");
  }

  const ContractSpec& s_;
  bool guarded_;
  Writer w_;
  Decl owner_, balances_, allowance_, supply_;
  std::vector<Decl> extras_;
  std::int64_t helper_id_ = 0;  // set once the helper is rendered
};

}  // namespace

std::vector<SyntheticContract> synth_generate(std::size_t n_pairs, std::uint64_t seed) {
  if (n_pairs == 0) throw Error(ErrorCode::TooSmall, "n_pairs must be at least 1");
  std::mt19937_64 rng(seed);
  std::vector<SyntheticContract> out;
  out.reserve(2 * n_pairs);
  for (std::size_t pair = 0; pair < n_pairs; ++pair) {
    const ContractSpec spec = draw_spec(rng);
    for (bool guarded : {false, true}) {
      SyntheticContract c;
      c.pair = pair;
      c.label = guarded ? Label::Clean : Label::Defective;
      char stem[64];
      std::snprintf(stem, sizeof stem, "pair_%04zu_%s", pair, guarded ? "clean" : "defective");
      c.stem = stem;
      auto [source, ast] = ContractRenderer(spec, guarded).render(c.stem + ".sol");
      c.source = std::move(source);
      c.ast_json = std::move(ast);
      c.description = std::string(kind_name(spec.target)) + " in `" + spec.contract_name + "." +
                      spec.target_name + "`, " +
                      (guarded ? std::string("guarded by ") +
                                     (spec.guard == GuardKind::Owner ? "an owner check"
                                                                     : "an allowance check")
                               : std::string("callable by anyone"));
      out.push_back(std::move(c));
    }
  }
  return out;
}

LabeledContract to_labeled(const SyntheticContract& contract) {
  return {contract.stem + ".ast.json", parse_ast_json(contract.ast_json), contract.label,
          Provenance::Synthetic};
}

std::filesystem::path write_synthetic_corpus(const std::filesystem::path& dir,
                                             const std::vector<SyntheticContract>& contracts) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  auto write = [](const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
      throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
  };
  std::string manifest;
  std::string readme =
      "# Synthetic corpus\n\n"
      "Each pair shares one random draw of names, state variables and helper\n"
      "functions. The `defective` member exposes a public state-changing entry\n"
      "point without any caller check; the `clean` member wraps the same body in\n"
      "an `if` on the caller (owner or allowance).\n\n"
      "| file | label | description |\n|---|---|---|\n";
  for (const auto& c : contracts) {
    write(dir / (c.stem + ".sol"), c.source);
    write(dir / (c.stem + ".ast.json"), c.ast_json);
    Json record;
    record["ast_path"] = c.stem + ".ast.json";
    record["label"] = std::string(to_string(c.label));
    record["provenance"] = "synthetic";
    manifest += record.dump() + "\n";
    readme += "| `" + c.stem + "` | " + std::string(to_string(c.label)) + " | " + c.description + " |\n";
  }
  const auto manifest_path = dir / "manifest.jsonl";
  write(manifest_path, manifest);
  write(dir / "README.md", readme);
  return manifest_path;
}

}  // namespace derail
