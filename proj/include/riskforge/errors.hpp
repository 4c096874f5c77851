#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace riskforge {

// Base class so callers (the CLI in particular) can catch everything the
// library throws in one place.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidAction : public Error {
 public:
  using Error::Error;
};

// Schema violation in an interchange file. `line` is 1-based; 0 means the
// error is not tied to a line (e.g. whole-document JSON).
class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, std::string path, const std::string& what)
      : Error(render(line, path, what)), line_(line), path_(std::move(path)) {}

  std::size_t line() const { return line_; }
  const std::string& path() const { return path_; }

 private:
  static std::string render(std::size_t line, const std::string& path,
                            const std::string& what) {
    std::string out = "schema error";
    if (line > 0) out += " at line " + std::to_string(line);
    if (!path.empty()) out += " (" + path + ")";
    return out + ": " + what;
  }

  std::size_t line_;
  std::string path_;
};

class FixtureError : public Error {
 public:
  FixtureError(std::string location, const std::string& what)
      : Error("fixture error at " + location + ": " + what),
        location_(std::move(location)) {}
  const std::string& location() const { return location_; }

 private:
  std::string location_;
};

class AlreadyTerminated : public Error {
 public:
  AlreadyTerminated() : Error("episode already terminated") {}
};

class Unsolvable : public Error {
 public:
  explicit Unsolvable(std::size_t depth_cap)
      : Error("no successful action sequence within depth " +
              std::to_string(depth_cap)),
        depth_cap_(depth_cap) {}
  std::size_t depth_cap() const { return depth_cap_; }

 private:
  std::size_t depth_cap_;
};

class GroupTooSmall : public Error {
 public:
  explicit GroupTooSmall(std::size_t size)
      : Error("group needs at least 2 rollouts, got " + std::to_string(size)) {}
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class UnknownToken : public Error {
 public:
  explicit UnknownToken(const std::string& token)
      : Error("token not in vocabulary: " + token) {}
};

class TooFewSteps : public Error {
 public:
  TooFewSteps() : Error("multi-step chaining needs at least 2 steps") {}
};

class OracleFailure : public Error {
 public:
  using Error::Error;
};

class UnknownFormat : public Error {
 public:
  explicit UnknownFormat(const std::string& name)
      : Error("unknown report format: " + name) {}
};

class UnknownCurve : public Error {
 public:
  explicit UnknownCurve(const std::string& name)
      : Error("unknown curve: " + name) {}
};

}  // namespace riskforge
