#pragma once

#include <stdexcept>
#include <string>

namespace hexplain {

// Game definition text failed to parse. Carries 1-based line/column.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string msg, int line, int column = 0)
        : std::runtime_error("parse error at line " + std::to_string(line) +
                             (column > 0 ? ":" + std::to_string(column) : "") + ": " + msg),
          line_(line), column_(column) {}
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

// A structurally valid definition violates a game invariant.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg)
        : std::runtime_error("validation error: " + msg) {}
};

class ArityError : public std::runtime_error {
public:
    explicit ArityError(const std::string& msg) : std::runtime_error(msg) {}
};

class UnknownWordError : public std::runtime_error {
public:
    explicit UnknownWordError(const std::string& word)
        : std::runtime_error("word not in vocabulary: " + word) {}
};

class ShapeMismatch : public std::runtime_error {
public:
    explicit ShapeMismatch(const std::string& msg) : std::runtime_error("shape mismatch: " + msg) {}
};

// Malformed trajectory/checkpoint stream. line() is 1-based.
class SchemaError : public std::runtime_error {
public:
    SchemaError(std::string msg, long line)
        : std::runtime_error("schema error at line " + std::to_string(line) + ": " + msg),
          line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& msg)
        : std::runtime_error("training diverged: " + msg) {}
};

// Conditional probability was requested for a step never observed.
class UnseenStep : public std::runtime_error {
public:
    explicit UnseenStep(const std::string& key)
        : std::runtime_error("step never observed in corpus: " + key) {}
};

}  // namespace hexplain
