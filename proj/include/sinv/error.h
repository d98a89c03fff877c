// sinv/error.h

#ifndef SINV_ERROR_H_
#define SINV_ERROR_H_

#include <stdexcept>
#include <string>

namespace sinv {

// Category of a failure; the CLI maps these to process exit codes.
enum class ErrorKind {
  kInvalidArgument,  // caller broke a precondition
  kConfig,           // bad configuration or command line (exit 2)
  kData,             // missing/corrupt/mismatched data files (exit 3)
  kNumeric,          // non-finite values during computation (exit 4)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kData: return 3;
    case ErrorKind::kNumeric: return 4;
    case ErrorKind::kInvalidArgument: return 2;
  }
  return 1;
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorKind::kInvalidArgument, what);
}

}  // namespace sinv

#endif  // SINV_ERROR_H_
