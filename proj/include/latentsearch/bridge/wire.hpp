#pragma once

#include "../errors.hpp"

#include <json.hpp>
#include <sodium/utils.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace latentsearch::bridge {

using Json = nlohmann::json;

/// Float32 tensor as carried on the wire.
struct WireTensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    std::size_t element_count() const
    {
        std::size_t n = 1;
        for (std::size_t d : shape)
            n *= d;
        return n;
    }
};

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t v)
{
    if constexpr (std::endian::native == std::endian::big)
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    else
        return v;
}

} // namespace detail

inline std::string base64_encode(std::span<const unsigned char> bytes)
{
    std::string out(sodium_base64_ENCODED_LEN(bytes.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
    sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
    out.pop_back(); // terminating NUL
    return out;
}

/// Strict decode: padding required, no whitespace, no stray characters.
inline std::vector<unsigned char> base64_decode(const std::string& text)
{
    std::vector<unsigned char> out(text.size() / 4 * 3 + 3);
    std::size_t written = 0;
    const char* end = nullptr;
    if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &written, &end,
                          sodium_base64_VARIANT_ORIGINAL)
            != 0
        || end != text.data() + text.size())
        throw ProtocolError("invalid base64 tensor data");
    out.resize(written);
    return out;
}

inline Json encode_tensor(const WireTensor& t)
{
    if (t.element_count() != t.data.size())
        throw ShapeError("tensor shape does not match its element count");
    std::vector<unsigned char> bytes(t.data.size() * 4);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        const std::uint32_t le = detail::to_little_endian(std::bit_cast<std::uint32_t>(t.data[i]));
        std::memcpy(bytes.data() + 4 * i, &le, 4);
    }
    return Json{{"shape", t.shape}, {"data", base64_encode(bytes)}};
}

inline WireTensor decode_tensor(const Json& j)
{
    if (!j.is_object() || !j.contains("shape") || !j.contains("data"))
        throw ProtocolError("tensor must be an object with 'shape' and 'data'");
    const Json& shape = j.at("shape");
    const Json& data = j.at("data");
    if (!shape.is_array() || !data.is_string())
        throw ProtocolError("tensor 'shape' must be an array and 'data' a string");
    WireTensor t;
    std::size_t count = 1;
    for (const Json& d : shape) {
        if (!d.is_number_integer() || d.get<std::int64_t>() < 0)
            throw ProtocolError("tensor shape entries must be non-negative integers");
        const auto extent = d.get<std::uint64_t>();
        if (extent != 0 && count > (std::uint64_t{1} << 40) / extent)
            throw ProtocolError("tensor shape is implausibly large");
        count *= extent;
        t.shape.push_back(extent);
    }
    const auto bytes = base64_decode(data.get<std::string>());
    if (bytes.size() != count * 4)
        throw ProtocolError("tensor shape product " + std::to_string(count) + " does not match "
                            + std::to_string(bytes.size()) + " decoded bytes");
    t.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t le = 0;
        std::memcpy(&le, bytes.data() + 4 * i, 4);
        t.data[i] = std::bit_cast<float>(detail::to_little_endian(le));
    }
    return t;
}

// Messages: one JSON object per line.
//   request:  {"id": n, "op": name, "payload": {...}}
//   response: {"id": n, "ok": true, "payload": {...}} or {"id": n, "ok": false, "error": text}

inline std::string request_line(std::uint64_t id, const std::string& op, const Json& payload)
{
    return Json{{"id", id}, {"op", op}, {"payload", payload}}.dump() + "\n";
}

/// Payload of a successful response to request `id`. Error responses raise
/// EvaluationError; anything malformed raises ProtocolError.
inline Json parse_response(const std::string& line, std::uint64_t id)
{
    Json msg;
    try {
        msg = Json::parse(line);
    } catch (const Json::exception& e) {
        throw ProtocolError(std::string("response is not valid JSON: ") + e.what());
    }
    if (!msg.is_object())
        throw ProtocolError("response must be a JSON object");
    if (!msg.contains("id") || !msg.at("id").is_number_integer() || msg.at("id").get<std::int64_t>() < 0)
        throw ProtocolError("response lacks an integer id");
    if (msg.at("id").get<std::uint64_t>() != id)
        throw ProtocolError("response id " + msg.at("id").dump() + " does not echo request id "
                            + std::to_string(id));
    if (!msg.contains("ok") || !msg.at("ok").is_boolean())
        throw ProtocolError("response lacks a boolean 'ok'");
    if (!msg.at("ok").get<bool>()) {
        const Json* err = msg.contains("error") ? &msg.at("error") : nullptr;
        throw EvaluationError("bridge error: " + (err && err->is_string() ? err->get<std::string>()
                                                                          : std::string("(no message)")));
    }
    if (!msg.contains("payload") || !msg.at("payload").is_object())
        throw ProtocolError("successful response lacks an object payload");
    return msg.at("payload");
}

inline const Json& member(const Json& obj, const char* name)
{
    if (!obj.is_object() || !obj.contains(name))
        throw ProtocolError(std::string("missing field '") + name + "'");
    return obj.at(name);
}

/// Typed field access that reports protocol errors instead of JSON exceptions.
template <typename T>
T field(const Json& obj, const char* name)
{
    const Json& v = member(obj, name);
    if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean())
            throw ProtocolError(std::string("field '") + name + "' must be a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string())
            throw ProtocolError(std::string("field '") + name + "' must be a string");
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number())
            throw ProtocolError(std::string("field '") + name + "' must be a number");
    } else {
        // nlohmann stores every non-negative integer literal as unsigned.
        if (!v.is_number_unsigned())
            throw ProtocolError(std::string("field '") + name + "' must be a non-negative integer");
        if (v.get<std::uint64_t>() > std::numeric_limits<T>::max())
            throw ProtocolError(std::string("field '") + name + "' is out of range");
    }
    return v.get<T>();
}

} // namespace latentsearch::bridge
