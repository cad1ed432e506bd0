#include <cstdio>

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::printf("sled: CLI not wired yet\n");
  return 2;
}
