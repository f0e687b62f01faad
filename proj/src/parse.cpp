#include "rdgcn/parse.hpp"

#include <fstream>
#include <sstream>

#include "rdgcn/error.hpp"
#include "syntax.hpp"

namespace rdgcn::kb {

namespace {

using detail::Cursor;
using detail::ParsedAtom;
using detail::TermMode;

PredicateSchema parse_schema_line(Cursor& cur) {
  PredicateSchema schema;
  schema.name = cur.identifier();
  cur.expect('(');
  if (!cur.peek(')')) {
    do {
      schema.arg_types.push_back(cur.identifier());
    } while (cur.consume(','));
  }
  cur.expect(')');
  cur.consume('.');
  if (!cur.at_end()) cur.fail("unexpected trailing input after schema");
  return schema;
}

/// Parses `Name(args).` and checks it against the registered schema.
ParsedAtom parse_ground_line(Cursor& cur, const KnowledgeBase& kb) {
  ParsedAtom parsed = cur.atom(TermMode::Ground);
  cur.expect('.');
  if (!cur.at_end()) cur.fail("unexpected trailing input after '.'");

  const auto& atom = parsed.atom;
  if (!kb.has_schema(atom.predicate)) {
    throw SchemaError("line " + std::to_string(cur.line_no()) +
                      ": unknown predicate: " + atom.predicate);
  }
  const PredicateSchema& s = kb.schema(atom.predicate);
  if (atom.args.size() != s.arity()) {
    throw SchemaError("line " + std::to_string(cur.line_no()) + ": arity mismatch for " +
                      s.name + ": expected " + std::to_string(s.arity()) + ", got " +
                      std::to_string(atom.args.size()));
  }
  for (std::size_t i = 0; i < parsed.terms.size(); ++i) {
    const auto& ann = parsed.terms[i].type_annotation;
    if (ann && *ann != s.arg_types[i]) {
      throw SchemaError("line " + std::to_string(cur.line_no()) + ", column " +
                        std::to_string(parsed.terms[i].column) + ": type mismatch for " +
                        s.name + " argument " + std::to_string(i + 1) + ": expected " +
                        s.arg_types[i] + ", got " + *ann);
    }
  }
  return parsed;
}

}  // namespace

KnowledgeBase& parse_facts(std::string_view text, KnowledgeBase& kb) {
  detail::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    Cursor cur(line, line_no);
    if (cur.at_end()) return;
    if (cur.consume('@')) {
      const std::string keyword = cur.identifier();
      if (keyword != "predicate") cur.fail("unknown directive @" + keyword);
      kb.add_schema(parse_schema_line(cur));
      return;
    }
    kb.add_fact(parse_ground_line(cur, kb).atom);
  });
  return kb;
}

std::vector<Atom> parse_examples(std::string_view text, KnowledgeBase& kb,
                                 std::string_view target_predicate) {
  const PredicateSchema target = kb.schema(target_predicate);
  std::vector<Atom> out;
  detail::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    Cursor cur(line, line_no);
    if (cur.at_end()) return;
    Atom atom = parse_ground_line(cur, kb).atom;
    if (atom.predicate != target.name) {
      throw SchemaError("line " + std::to_string(line_no) + ": example predicate " +
                        atom.predicate + " is not the target " + target.name);
    }
    for (std::size_t i = 0; i < atom.args.size(); ++i) {
      kb.declare_constant(target.arg_types[i], atom.args[i].name);
    }
    out.push_back(std::move(atom));
  });
  return out;
}

void write_facts(std::ostream& out, const KnowledgeBase& kb) {
  for (const auto& s : kb.schemas()) {
    out << "@predicate " << s.name << "(";
    for (std::size_t i = 0; i < s.arg_types.size(); ++i) {
      out << (i ? ", " : "") << s.arg_types[i];
    }
    out << ")\n";
  }
  for (const Atom& fact : kb.all_facts()) out << format_fact(fact) << ".\n";
}

void write_examples(std::ostream& out, const std::vector<Atom>& atoms) {
  for (const Atom& a : atoms) out << format_fact(a) << ".\n";
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << contents;
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace rdgcn::kb
