// Error taxonomy shared across the library. The CLI maps these to exit
// codes: DataError -> 2 (bad inputs/files/shapes), NumericError -> 3
// (non-finite results, divergence). Flag misuse is handled by the parser.
#pragma once

#include <stdexcept>
#include <string>

namespace countdown {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace countdown
