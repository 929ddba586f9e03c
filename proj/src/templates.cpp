#include "ifboost/templates.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>

#include "ifboost/core.hpp"

namespace ifboost::templates {

namespace {

bool ident_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c == '_';
}

}  // namespace

std::vector<std::string> names() {
  std::vector<std::string> out;
  for (const auto& a : detail::embedded_assets()) out.push_back(a.name);
  return out;
}

const std::string& get(std::string_view name) {
  for (const auto& a : detail::embedded_assets()) {
    if (a.name == name) return a.content;
  }
  throw Error("unknown prompt template '" + std::string(name) + "'");
}

Syntax syntax_of(std::string_view name) {
  return name == kInitialGeneration ? Syntax::Brace : Syntax::Dollar;
}

std::string render_text(std::string_view content, const Vars& vars, Syntax syntax) {
  std::string out;
  out.reserve(content.size());
  std::size_t i = 0;
  while (i < content.size()) {
    std::size_t open = syntax == Syntax::Dollar ? content.find("${", i)
                                                : content.find('{', i);
    if (open == std::string_view::npos) break;
    const std::size_t name_begin = open + (syntax == Syntax::Dollar ? 2 : 1);
    std::size_t j = name_begin;
    while (j < content.size() && ident_char(content[j])) ++j;
    if (j == name_begin || j >= content.size() || content[j] != '}') {
      // Not a placeholder; copy through the opening character.
      out.append(content.substr(i, open + 1 - i));
      i = open + 1;
      continue;
    }
    std::string_view key = content.substr(name_begin, j - name_begin);
    auto it = vars.find(key);
    if (it == vars.end()) {
      throw Error("template variable '" + std::string(key) + "' has no value");
    }
    out.append(content.substr(i, open - i));
    out.append(it->second);
    i = j + 1;
  }
  out.append(content.substr(i));
  return out;
}

std::string render(std::string_view name, const Vars& vars) {
  return render_text(get(name), vars, syntax_of(name));
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::string hex;
  hex.reserve(len * 2);
  char buf[3];
  for (unsigned int k = 0; k < len; ++k) {
    std::snprintf(buf, sizeof buf, "%02x", digest[k]);
    hex += buf;
  }
  return hex;
}

std::map<std::string, std::string> content_hashes() {
  std::map<std::string, std::string> out;
  for (const auto& a : detail::embedded_assets()) out[a.name] = sha256_hex(a.content);
  return out;
}

}  // namespace ifboost::templates
