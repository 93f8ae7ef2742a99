#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsm/error.hpp"
#include "nsm/programmer.hpp"
#include "nsm/value.hpp"

namespace nsm {

/// JSON form of an answer value: entities are strings, numbers are
/// numbers, dates are {"date": "YYYY-MM-DD"}.
inline nlohmann::json value_to_json(const Value& v) {
  switch (v.kind()) {
    case ValueKind::Entity: return v.entity_id();
    case ValueKind::Number: return v.number();
    case ValueKind::Date: return nlohmann::json{{"date", v.date().str()}};
  }
  return nullptr;
}

inline Value value_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>().empty()) throw FormatError("empty entity id in answers");
    return Value::entity(j.get<std::string>());
  }
  if (j.is_number()) {
    const double x = j.get<double>();
    if (!std::isfinite(x)) throw FormatError("non-finite number in answers");
    return Value(x);
  }
  if (j.is_object() && j.contains("date") && j["date"].is_string()) {
    if (auto d = Date::parse(j["date"].get<std::string>())) return Value(*d);
  }
  throw FormatError("bad answer value " + j.dump());
}

/// One JSON-lines record: {id, question, entities: [{start, end, id}], answers}.
inline std::string item_to_line(const QAItem& item) {
  nlohmann::ordered_json out;
  std::string question;
  for (const auto& w : item.question) question += (question.empty() ? "" : " ") + w;
  out["id"] = item.id;
  out["question"] = question;
  out["entities"] = nlohmann::ordered_json::array();
  for (const auto& m : item.entities) {
    nlohmann::ordered_json e;
    e["start"] = m.begin;
    e["end"] = m.end;
    e["id"] = m.entity;
    out["entities"].push_back(e);
  }
  out["answers"] = nlohmann::ordered_json::array();
  for (const auto& v : item.answers) out["answers"].push_back(nlohmann::ordered_json(value_to_json(v)));
  return out.dump();
}

inline QAItem item_from_json(const nlohmann::json& j) {
  try {
    QAItem item;
    item.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    item.question = split_whitespace(j.at("question").get<std::string>());
    if (item.question.empty()) throw FormatError("item " + item.id + ": empty question");
    for (const auto& e : j.at("entities"))
      item.entities.push_back({e.at("start").get<std::size_t>(), e.at("end").get<std::size_t>(),
                               e.at("id").get<std::string>()});
    std::vector<Value> answers;
    for (const auto& a : j.at("answers")) answers.push_back(value_from_json(a));
    item.answers = EntitySet(std::move(answers));
    if (item.answers.empty()) throw FormatError("item " + item.id + ": empty answer set");
    item.validate();
    return item;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad dataset record: ") + e.what());
  }
}

inline std::vector<QAItem> parse_dataset(std::istream& in) {
  std::vector<QAItem> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(item_from_json(j));
  }
  return out;
}

inline std::vector<QAItem> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset '" + path + "'");
  return parse_dataset(in);
}

inline std::string serialize_dataset(const std::vector<QAItem>& items) {
  std::string out;
  for (const auto& item : items) out += item_to_line(item) + '\n';
  return out;
}

inline void save_dataset(const std::vector<QAItem>& items, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write dataset '" + path + "'");
  out << serialize_dataset(items);
}

}  // namespace nsm
