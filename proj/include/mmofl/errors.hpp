#pragma once

#include <stdexcept>
#include <string>

namespace mmofl {

// Vector with no positive norm handed to a normalizing operation.
struct ZeroNormError : std::runtime_error {
    explicit ZeroNormError(const std::string& what) : std::runtime_error(what) {}
};

// Incompatible vector/matrix dimensions.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// A prototype cell required by a loss or substitution is unpopulated.
struct MissingPrototypeError : std::runtime_error {
    explicit MissingPrototypeError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed text input; carries the 1-based line number.
struct ParseError : std::runtime_error {
    ParseError(int line_no, const std::string& what)
        : std::runtime_error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
    int line;
};

// Structurally valid input violating the declared schema (bad label, bad range).
struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

// Client/server exchange violating the round protocol.
struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

// Ill-formed serialized payload.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Configuration file problem; message names the offending key (and line).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mmofl
