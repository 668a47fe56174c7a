#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace casseg {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error { public: using Error::Error; };
class LabelError : public Error { public: using Error::Error; };
class NumericError : public Error { public: using Error::Error; };
class StateError : public Error { public: using Error::Error; };
class DataError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class ParameterError : public Error { public: using Error::Error; };
class GenerationError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };

// Malformed file content. offset is the byte position where parsing stopped.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

} // namespace casseg
