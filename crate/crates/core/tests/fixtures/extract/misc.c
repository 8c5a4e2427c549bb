#include "header.h"

__attribute__((unused)) static int attr_fn(int a)
{
    return a;
}

SYSCALL_DEFINE2(kill, pid_t, pid, int, sig)
{
    return do_kill(pid, sig);
}

int unsigned_params(unsigned int a, unsigned long b, const struct point *c)
{
    return (int)(a + b) + c->x;
}

void *alloc_buffer(size_t n)
{
    return malloc(n);
}

int goto_user(int n)
{
    if (n)
        goto out;
    n++;
out:
    return n;
}

int string_concat(void)
{
    const char *s = "abc" "def{";
    return s[0];
}

static int comment_between(int a /* first */, int b /* , second */)
{
    return a - b;
}
