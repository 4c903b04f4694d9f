#include "lagscope/error.hpp"
