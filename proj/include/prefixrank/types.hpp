#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace prefixrank {

using Token = std::string;
using Tokens = std::vector<Token>;

/// Base class for every error the library raises on bad input or state.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace prefixrank
