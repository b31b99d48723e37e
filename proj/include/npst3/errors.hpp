#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace npst3 {

class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error
{
public:
  using Error::Error;
};

class FormatError : public Error
{
public:
  FormatError(std::string const &what, std::size_t line = 0, std::string const &source = {})
    : Error((source.empty() ? std::string() : source + ": ") +
            (line > 0 ? "line " + std::to_string(line) + ": " + what : what))
    , detail_(what)
    , line_(line)
  {}

  std::string const &detail() const
  {
    return detail_;
  }

  // 1-based line of the offending record, 0 when not line-oriented.
  std::size_t line() const
  {
    return line_;
  }

private:
  std::string detail_;
  std::size_t line_;
};

class InsufficientDataError : public Error
{
public:
  using Error::Error;
};

class StateError : public Error
{
public:
  using Error::Error;
};

class CapacityError : public Error
{
public:
  using Error::Error;
};

class EmptyTrajectoryError : public Error
{
public:
  using Error::Error;
};

class NumericError : public Error
{
public:
  using Error::Error;
};

class NotReadyError : public Error
{
public:
  using Error::Error;
};

class LookupError : public Error
{
public:
  using Error::Error;
};

class LoadError : public Error
{
public:
  using Error::Error;
};

class DependencyError : public Error
{
public:
  using Error::Error;
};

class SessionCompleteError : public Error
{
public:
  using Error::Error;
};

class ConfigError : public Error
{
public:
  using Error::Error;
};

class AddressInUseError : public Error
{
public:
  using Error::Error;
};

}  // namespace npst3
