#pragma once

#include <httplib.h>

// <resolv.h>, pulled in by httplib, defines `_res` as a macro; Eigen uses the
// name as an identifier.
#ifdef _res
#undef _res
#endif
