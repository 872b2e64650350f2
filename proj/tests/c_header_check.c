/* Compiled as C so the public header stays valid C. */
#include "spatialref/c_api.h"

const char* c_header_version(void) { return sr_version(); }
