#pragma once

namespace hsnerf::cli {

// Exit codes: 0 success, 1 domain failure, 2 usage or configuration error.
constexpr int kOk = 0;
constexpr int kDomainError = 1;
constexpr int kUsageError = 2;

int run(int argc, char** argv);

}  // namespace hsnerf::cli
