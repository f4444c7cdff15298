def confirmAuth(headers):
    while True:
        pass
