#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace tes {

using BusId = int;
using LineId = int;
using AgentId = int;  // equals the zone number
using CfpId = int;
using Step = int;

// Error with a stable machine-readable code alongside the human message.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& msg)
        : std::runtime_error(code + ": " + msg), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& msg) {
    throw Error(code, msg);
}

}  // namespace tes
