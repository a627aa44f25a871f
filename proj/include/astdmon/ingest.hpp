#pragma once

// Line-delimited JSON audit records.

#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "astdmon/calendar.hpp"
#include "astdmon/detector.hpp"

namespace astdmon {

struct RawEventRecord {
  std::string id;
  Timestamp creation;
  std::string user_id;

  AuditEvent to_event() && { return AuditEvent{std::move(id), creation, std::move(user_id)}; }
  friend bool operator==(const RawEventRecord&, const RawEventRecord&) = default;
};

struct Malformed {
  std::string reason;
};

using ParsedRecord = std::variant<RawEventRecord, Malformed>;

namespace detail {

inline const nlohmann::json* string_field(const nlohmann::json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) return nullptr;
  return &*it;
}

}  // namespace detail

inline bool is_blank(std::string_view line) noexcept {
  return line.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

// Accepts "Id" or "ID" for the event id; every other field is ignored.
inline ParsedRecord parse_record(std::string_view line) {
  const nlohmann::json doc = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) return Malformed{"bad json"};
  if (!doc.is_object()) return Malformed{"not a json object"};

  const nlohmann::json* id = detail::string_field(doc, "ID");
  if (id == nullptr) id = detail::string_field(doc, "Id");
  if (id == nullptr) return Malformed{"missing ID"};
  const nlohmann::json* created = detail::string_field(doc, "CreationTime");
  if (created == nullptr) return Malformed{"missing CreationTime"};
  const nlohmann::json* user = detail::string_field(doc, "UserId");
  if (user == nullptr) return Malformed{"missing UserId"};

  RawEventRecord rec;
  rec.id = id->get<std::string>();
  rec.user_id = user->get<std::string>();
  if (rec.id.empty()) return Malformed{"empty ID"};
  if (rec.user_id.empty()) return Malformed{"empty UserId"};
  const auto ts = Timestamp::try_parse(created->get_ref<const std::string&>());
  if (!ts) return Malformed{"bad timestamp"};
  rec.creation = *ts;
  return rec;
}

// Fixed key order, so equal alert streams are byte-identical.
inline std::string alert_line(const AlertRecord& a) {
  nlohmann::ordered_json j;
  j["event_id"] = a.event_id;
  j["user_id"] = a.user_id;
  j["period"] = a.period.encoded();
  j["minute"] = a.minute.value();
  j["density"] = a.density;
  j["threshold"] = a.threshold;
  return j.dump();
}

inline std::string event_line(const AuditEvent& ev) {
  nlohmann::ordered_json j;
  j["Id"] = ev.id;
  j["CreationTime"] = ev.creation.render();
  j["UserId"] = ev.user_id;
  return j.dump();
}

}  // namespace astdmon
