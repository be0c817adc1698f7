#include <cstdio>

int main() {
  std::puts("magnav: not wired up yet");
  return 2;
}
