#include "satcalc/error.hpp"

namespace satcalc {

void throw_shape(const std::string& what)
{
    throw ShapeError(what);
}

} // namespace satcalc
