#include "magnav/core.hpp"
