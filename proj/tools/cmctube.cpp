#include <cstdio>

int main() {
  std::printf("cmctube: placeholder\n");
  return 0;
}
