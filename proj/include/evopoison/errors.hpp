#pragma once
// Error taxonomy shared across the testbed. Every failure mode callers are
// expected to handle has its own type; anything else is a plain Error.

#include <stdexcept>
#include <string>

namespace evopoison {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// graph-core
class NotFoundError : public Error {
public:
    using Error::Error;
};
class EmptyGraphError : public Error {
public:
    using Error::Error;
};
class InvalidLinkError : public Error {
public:
    using Error::Error;
};
class InvalidTripleError : public Error {
public:
    using Error::Error;
};

// llm-gateway
class ProviderUnavailableError : public Error {
public:
    using Error::Error;
};
class EmptyResponseError : public Error {
public:
    using Error::Error;
};
class InvalidInputError : public Error {
public:
    using Error::Error;
};
class UnsupportedError : public Error {
public:
    using Error::Error;
};

// rag-pipeline
class InvalidConfigError : public Error {
public:
    using Error::Error;
};
class ExtractionFailedError : public Error {
public:
    using Error::Error;
};
class AnswerFailedError : public Error {
public:
    using Error::Error;
};

// attack
class FabricationRejectedError : public Error {
public:
    using Error::Error;
};
class IncompleteCorpusError : public Error {
public:
    using Error::Error;
};
class TemporalOrderViolationError : public Error {
public:
    using Error::Error;
};
class CpplUnavailableError : public Error {
public:
    using Error::Error;
};
class GroupUnlinkableError : public Error {
public:
    using Error::Error;
};
class SingleTargetOnlyError : public Error {
public:
    using Error::Error;
};

// eval-defense
class JudgeFailedError : public Error {
public:
    using Error::Error;
};
class NoDataError : public Error {
public:
    using Error::Error;
};
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};
class InvalidNError : public Error {
public:
    using Error::Error;
};

} // namespace evopoison
