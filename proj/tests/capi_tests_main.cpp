extern "C" int run_capi_checks(void);
int main(void){return run_capi_checks();}
