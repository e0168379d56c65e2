#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "failprob/log.hpp"

int main(int argc, char** argv) {
  failprob::set_quiet(true);
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
