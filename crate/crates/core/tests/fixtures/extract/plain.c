#include <stdio.h>
#include <string.h>

#define SQUARE(x) ((x) * (x))
#define LOG(fmt, ...) fprintf(stderr, fmt, __VA_ARGS__)

struct point {
    int x;
    int y;
};

static const char *names[] = { "a", "b", "c" };

int f(void) { return 0; }

void myFunc(int a, int b, double c, char *d) { }

static int add(int a, int b)
{
    return a + b;
}

unsigned long
hash_string(const char *s)
{
    unsigned long h = 5381;
    while (*s) {
        h = h * 33 + (unsigned char)*s++;
    }
    return h;
}

int no_params()
{
    return 1;
}

/* int commented_out(int a) { return a; } */

// void also_commented(void) { }

const char *brace_in_string(void)
{
    return "}{ not a brace";
}

char brace_in_char(int k)
{
    if (k) {
        return '}';
    }
    return '{';
}

int with_callback(int (*cb)(int, int), void *ctx)
{
    return cb(1, 2) + (ctx != NULL);
}

int
multi_line_params(int first,
                  int second,
                  int third)
{
    return first + second + third;
}

static inline int inline_helper(int v) { return v << 1; }

int array_param(int values[], size_t n)
{
    size_t i;
    int sum = 0;
    for (i = 0; i < n; i++) {
        sum += values[i];
    }
    return sum;
}

void variadic(const char *fmt, ...)
{
    (void)fmt;
}

struct point make_point(int x, int y)
{
    struct point p = { x, y };
    return p;
}

int nested_blocks(int n)
{
    int total = 0;
    {
        int inner = n;
        total += inner;
    }
    switch (n) {
    case 1: { total++; break; }
    default: break;
    }
    return total;
}

int macro_user(int v)
{
    LOG("%d\n", SQUARE(v));
    return SQUARE(v);
}

#ifdef FEATURE_X
int feature_x(int a)
{
    return a;
}
#endif

int after_ifdef(void) { return 2; }

int kr_style(a, b)
int a;
int b;
{
    return a * b;
}

char *returns_pointer(char *buf, size_t len)
{
    memset(buf, 0, len);
    return buf;
}

int compound_literal(void)
{
    struct point p = (struct point){ 1, 2 };
    return p.x;
}

int long_string(void)
{
    const char *s = "a \"quoted\" string with } and { inside";
    return (int)strlen(s);
}

int last_in_file(int a, int b, int c, int d, int e)
{
    return a + b + c + d + e;
}
