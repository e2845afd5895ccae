#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace kakutani {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// DSL or structured-format syntax error, positioned at 1-based line/column.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& what)
      : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// A well-formed spec that fails a semantic check (summability, arity, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A move could not be resolved inside the stack at any stage up to the budget.
class NeedMoreDepth : public Error {
 public:
  explicit NeedMoreDepth(std::size_t budget)
      : Error("move unresolved through stage " + std::to_string(budget)), budget_(budget) {}
  std::size_t budget() const noexcept { return budget_; }

 private:
  std::size_t budget_;
};

/// A finite digit stream was asked for a digit it does not carry.
class ExhaustedDigits : public Error {
 public:
  explicit ExhaustedDigits(std::size_t stage)
      : Error("digit stream has no digit for stage " + std::to_string(stage)), stage_(stage) {}
  std::size_t stage() const noexcept { return stage_; }

 private:
  std::size_t stage_;
};

/// A carry ran through every digit inside the budget (all maximal, or all zero going down).
class NeedMoreDigits : public Error {
 public:
  explicit NeedMoreDigits(std::size_t budget)
      : Error("carry unresolved within " + std::to_string(budget) + " digits"), budget_(budget) {}
  std::size_t budget() const noexcept { return budget_; }

 private:
  std::size_t budget_;
};

/// An iteration (return time, orbit search) ran past its step budget.
class BudgetExhausted : public Error {
 public:
  explicit BudgetExhausted(std::uint64_t budget, const std::string& what = "step budget exhausted")
      : Error(what + " (budget " + std::to_string(budget) + ")"), budget_(budget) {}
  std::uint64_t budget() const noexcept { return budget_; }

 private:
  std::uint64_t budget_;
};

/// A windowed pile/pit computation needed more base-orbit indices than allowed.
class WindowExhausted : public Error {
 public:
  explicit WindowExhausted(std::uint64_t window)
      : Error("assignment not determined within window " + std::to_string(window)), window_(window) {}
  std::uint64_t window() const noexcept { return window_; }

 private:
  std::uint64_t window_;
};

/// A precondition on the inputs of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace kakutani
