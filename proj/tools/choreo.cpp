#include "choreo/app.h"

int main(int argc, char** argv) { return choreo::app::run_cli(argc, argv); }
