#include <cstdio>

int main() {
  std::puts("sddp: subcommands not wired up yet");
  return 1;
}
