// Command-line front end; subcommands arrive with the library modules.
#include <cstdio>

int main() {
  std::fprintf(stderr, "resolvent_kit: not wired up yet\n");
  return 2;
}
