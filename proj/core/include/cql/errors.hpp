#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cql {

// Base of every error thrown by the library. kind() is a short stable token
// ("dimension", "numeric", ...) used by the CLI for machine-parseable output.
class Error : public std::runtime_error {
public:
    Error(std::string_view kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    std::string_view kind() const noexcept { return kind_; }

private:
    std::string_view kind_;
};

#define CQL_DEFINE_ERROR(Name, token)                                  \
    class Name : public Error {                                        \
    public:                                                            \
        explicit Name(const std::string& what) : Error(token, what) {} \
    }

CQL_DEFINE_ERROR(DimensionError, "dimension");
CQL_DEFINE_ERROR(NumericError, "numeric");
CQL_DEFINE_ERROR(DomainError, "domain");
CQL_DEFINE_ERROR(ConsistencyError, "consistency");
CQL_DEFINE_ERROR(ConfigError, "config");
CQL_DEFINE_ERROR(SchemaError, "schema");
CQL_DEFINE_ERROR(ParseError, "parse");
CQL_DEFINE_ERROR(FitError, "fit");
CQL_DEFINE_ERROR(SplitError, "split");
CQL_DEFINE_ERROR(EncodingError, "encoding");
CQL_DEFINE_ERROR(TrainingError, "training");
CQL_DEFINE_ERROR(IoError, "io");

#undef CQL_DEFINE_ERROR

}  // namespace cql
