#pragma once

#include <stdexcept>
#include <string>

namespace simbil {

// Base of every error the library raises. The category drives CLI exit
// codes and HTTP status mapping.
class Error : public std::runtime_error {
public:
    enum class Kind { usage, validation, not_found, conflict, runtime };

    Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

// Malformed document; `path` is a JSON pointer to the offending element.
class ParseError : public Error {
public:
    ParseError(std::string path, const std::string& what)
        : Error(Kind::validation, path + ": " + what), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(Kind::validation, what) {}
};

class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& what) : Error(Kind::not_found, what) {}
};

class ConflictError : public Error {
public:
    explicit ConflictError(const std::string& what) : Error(Kind::conflict, what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(Kind::usage, what) {}
};

class RuntimeError : public Error {
public:
    explicit RuntimeError(const std::string& what) : Error(Kind::runtime, what) {}
};

} // namespace simbil
