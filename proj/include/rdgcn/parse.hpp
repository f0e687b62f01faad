#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "rdgcn/kb.hpp"

namespace rdgcn::kb {

/// Adds schema lines (`@predicate Name(type, ...)`) and fact lines
/// (`Name(c1, c2).`) from `text` to `kb`. Duplicate facts collapse.
/// Constants may carry a `name:type` annotation, checked against the schema.
///
/// Throws ParseError (with line/column) or SchemaError.
KnowledgeBase& parse_facts(std::string_view text, KnowledgeBase& kb);

/// Parses ground atoms of `target_predicate`, one per line, in fact-line
/// syntax. Their constants are registered into `kb`'s typed domains.
std::vector<Atom> parse_examples(std::string_view text, KnowledgeBase& kb,
                                 std::string_view target_predicate);

/// Schema lines followed by every fact; reparsing yields the same fact set.
void write_facts(std::ostream& out, const KnowledgeBase& kb);
void write_examples(std::ostream& out, const std::vector<Atom>& atoms);

/// Throws DataError when the file cannot be read.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace rdgcn::kb
