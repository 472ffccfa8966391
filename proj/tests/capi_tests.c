#include <bevfuse/bevfuse.h>
int run_capi_checks(void){return bf_version()==0;}
